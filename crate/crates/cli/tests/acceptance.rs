//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `--nocapture`). Tolerances are fixed here.

use std::time::Instant;

use assert_cmd::Command;

use plg_cli::config::RunConfig;
use plg_core::actuator::{self, ElongationDataPoint, ElongationMap, IntegrityStatus};
use plg_core::dsl;
use plg_core::locomotion::{self, BodyConfig, FrictionModel, MarkerEnd};
use plg_core::logic::{self, DelayModel, LogicTrace};
use plg_core::pneumo::{self, PneumoParams};
use plg_core::{BellowSpec, Netlist};

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn ring4() -> Netlist {
    Netlist::ring_oscillator(4, BellowSpec::preset_t16(), 2.0, 140.0).unwrap()
}

fn shipped_params() -> PneumoParams {
    RunConfig::defaults().unwrap().pneumo
}

fn passed(n: u32, what: &str) {
    println!("ACCEPTANCE {n} PASS: {what}");
}

#[test]
fn acceptance_01_truth_tables_match_operational_diagrams() {
    let start = Instant::now();
    Command::cargo_bin("plg")
        .unwrap()
        .args(["truth-table", "inverter"])
        .assert()
        .success()
        .stdout("T        OUT\nL        H\nH        L\n");
    Command::cargo_bin("plg")
        .unwrap()
        .args(["truth-table", "buffer"])
        .assert()
        .success()
        .stdout("T        OUT\nL        L\nH        H\n");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    passed(1, "inverter and buffer tables, 4 rows, under 1 s");
}

/// First rising edge at or after `settle` for every node, in time order.
fn settled_edge_order(trace: &LogicTrace, settle: f64) -> Vec<String> {
    let anchor = trace
        .rising_edges("M1.OUT")
        .into_iter()
        .find(|&t| t >= settle)
        .unwrap();
    let mut firsts: Vec<(f64, String)> = trace
        .nodes
        .iter()
        .map(|n| {
            let t = trace
                .rising_edges(n)
                .into_iter()
                .find(|&e| e >= anchor)
                .unwrap();
            (t, n.clone())
        })
        .collect();
    firsts.sort_by(|a, b| a.0.total_cmp(&b.0));
    firsts.into_iter().map(|(_, n)| n).collect()
}

#[test]
fn acceptance_02_oscillator_period_and_edge_order() {
    // The shipped defaults carry the calibrated constants; the calibration
    // operation itself must reproduce them.
    let shipped = shipped_params();
    let recalibrated = pneumo::calibrate(5.98, 4, &PneumoParams::default()).unwrap();
    assert!(
        (recalibrated.tau_fill_s - shipped.tau_fill_s).abs() < 0.02 * shipped.tau_fill_s,
        "calibration drifted: {} vs shipped {}",
        recalibrated.tau_fill_s,
        shipped.tau_fill_s
    );

    let start = Instant::now();
    let trace = pneumo::simulate_pressure(&ring4(), &shipped, 60.0).unwrap();
    let digital = pneumo::digitize(&trace, &shipped);
    let period = logic::measure_period(&digital, "M1.OUT", 20.0).unwrap();
    let elapsed = start.elapsed();
    assert!(
        (period - 5.98).abs() <= 5.98 * 0.02,
        "digitized period {period}"
    );
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");

    // Event-driven view agrees on order and period.
    let delays = DelayModel::for_ring_period(5.98, 4).unwrap();
    let events = logic::simulate_logic(&ring4(), &delays, 60.0).unwrap();
    let event_period = logic::measure_period(&events, "M1.OUT", 20.0).unwrap();
    assert!(
        (event_period - period).abs() <= period * 0.02,
        "event period {event_period} vs pressure period {period}"
    );
    let order_pressure = settled_edge_order(&digital, 20.0);
    let order_events = settled_edge_order(&events, 20.0);
    let expected = ["M1.OUT", "M2.OUT", "M3.OUT", "M4.OUT"];
    assert_eq!(order_pressure, expected);
    assert_eq!(order_events, expected);
    passed(
        2,
        "5.98 s +/- 2 %, M1->M2->M3->M4 in both engines, under 10 s",
    );
}

#[test]
fn acceptance_03_period_scales_with_time_constants() {
    let shipped = shipped_params();
    let base = pneumo::ring_period(4, &shipped, 60.0, 24.0).unwrap();
    for k in [0.5, 2.0, 4.0] {
        let period = pneumo::ring_period(4, &shipped.scaled(k), 60.0 * k, 24.0 * k).unwrap();
        assert!(
            (period - base * k).abs() <= base * k * 0.01,
            "k={k}: {period} vs {}",
            base * k
        );
    }
    passed(
        3,
        "time-constant scaling k in {0.5, 2, 4} scales the period by k +/- 1 %",
    );
}

/// Independent least-squares oracle: nested grid search over
/// (x_sat, amplitude, tau), refined twice around the best cell.
fn grid_search_oracle(points: &[ElongationDataPoint]) -> (f64, f64, f64, f64) {
    let ys: Vec<f64> = points.iter().map(|p| p.deformation_mm).collect();
    let ts: Vec<f64> = points.iter().map(|p| p.actuation_duration_ms).collect();
    let max_y = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let cost = |xs: f64, a: f64, tau: f64| -> f64 {
        ts.iter()
            .zip(&ys)
            .map(|(&t, &y)| {
                let r = xs - a * (-t / tau).exp() - y;
                r * r
            })
            .sum::<f64>()
    };

    let mut center = (max_y + 2.0, 6.0, 400.0);
    let mut span = (4.0, 12.0, 800.0);
    let mut best = (center.0, center.1, center.2, f64::INFINITY);
    for _ in 0..4 {
        let steps = 40;
        for i in 0..=steps {
            let xs = center.0 - span.0 / 2.0 + span.0 * i as f64 / steps as f64;
            if xs <= max_y {
                continue;
            }
            for j in 0..=steps {
                let a = center.1 - span.1 / 2.0 + span.1 * j as f64 / steps as f64;
                if a <= 0.0 {
                    continue;
                }
                for k in 0..=steps {
                    let tau = center.2 - span.2 / 2.0 + span.2 * k as f64 / steps as f64;
                    if tau <= 1.0 {
                        continue;
                    }
                    let c = cost(xs, a, tau);
                    if c < best.3 {
                        best = (xs, a, tau, c);
                    }
                }
            }
        }
        center = (best.0, best.1, best.2);
        span = (span.0 * 0.12, span.1 * 0.12, span.2 * 0.12);
    }
    let rmse = (best.3 / points.len() as f64).sqrt();
    (best.0, best.1, best.2, rmse)
}

#[test]
fn acceptance_04_actuator_fits_match_oracle_and_data() {
    let points = actuator::characterization_t16();
    let groups = actuator::group_by_condition(&points);
    assert_eq!(groups.len(), 2);

    let bounds = [0.3, 0.5];
    let paper_checks = [(400.0, 10.8), (800.0, 14.0)];
    for (i, ((_, pts), bound)) in groups.iter().zip(bounds).enumerate() {
        let fit = actuator::fit_elongation(pts).unwrap();
        let (oracle_xs, _, oracle_tau, oracle_rmse) = grid_search_oracle(pts);
        assert!(
            fit.fit_rmse_mm <= bound,
            "group {i}: rmse {} above bound {bound}",
            fit.fit_rmse_mm
        );
        // The solver must match or beat the independent oracle.
        assert!(
            fit.fit_rmse_mm <= oracle_rmse + 1e-3,
            "group {i}: fit rmse {} vs oracle {oracle_rmse}",
            fit.fit_rmse_mm
        );
        assert!(
            (fit.x_sat_mm - oracle_xs).abs() < 0.25,
            "group {i}: x_sat {} vs oracle {oracle_xs}",
            fit.x_sat_mm
        );
        assert!(
            (fit.tau_ms - oracle_tau).abs() < 25.0,
            "group {i}: tau {} vs oracle {oracle_tau}",
            fit.tau_ms
        );
        // Strictly increasing prediction curve.
        let mut prev = fit.elongation_at(0.0);
        for step in 1..=100 {
            let x = fit.elongation_at(step as f64 * 20.0);
            assert!(x > prev);
            prev = x;
        }
        let (ad, expected) = paper_checks[i];
        assert!(
            (fit.elongation_at(ad) - expected).abs() <= bound,
            "group {i}: {} at AD={ad} vs {expected}",
            fit.elongation_at(ad)
        );
    }
    passed(
        4,
        "fits beat the grid-search oracle, RMSE <= 0.3 / 0.5 mm, hit 10.8 and 14.0 mm",
    );
}

#[test]
fn acceptance_05_fatigue_rule_literal_cases() {
    assert_eq!(
        actuator::check_integrity(1.3, 2.0, 1000.0),
        IntegrityStatus::FatigueFailure
    );
    assert_eq!(
        actuator::check_integrity(1.3, 2.3, 1000.0),
        IntegrityStatus::FatigueFailure
    );
    for ad in [200.0, 400.0, 600.0, 800.0, 1000.0] {
        for pressure in [1.7, 2.0, 2.3] {
            assert_eq!(
                actuator::check_integrity(1.6, pressure, ad),
                IntegrityStatus::Ok,
                "1.6 mm at {pressure} bar, {ad} ms"
            );
        }
    }
    passed(5, "fatigue rule matches the three literal cases");
}

struct Pipeline {
    body: BodyConfig,
    drive: locomotion::Drive,
    period: f64,
    dt: f64,
}

fn paper_pipeline() -> Pipeline {
    let config = RunConfig::defaults().unwrap();
    let trace = pneumo::simulate_pressure(&ring4(), &config.pneumo, 66.0).unwrap();
    let digital = pneumo::digitize(&trace, &config.pneumo);
    let period = logic::measure_period(&digital, "M1.OUT", 22.0).unwrap();
    let groups = actuator::group_by_condition(&actuator::characterization_t16());
    let models = ElongationMap::new(
        groups
            .iter()
            .map(|(_, pts)| actuator::fit_elongation(pts).unwrap())
            .collect(),
    )
    .unwrap();
    let body = BodyConfig::robot_default();
    let mapping: Vec<String> = (1..=4).map(|i| format!("M{i}.OUT")).collect();
    let drive = locomotion::build_drive(
        &trace,
        &mapping,
        &models,
        &body,
        config.tau_release_ms,
        config.pneumo.p_threshold_on_bar,
    )
    .unwrap();
    Pipeline {
        body,
        drive,
        period,
        dt: config.loco_dt_s,
    }
}

#[test]
fn acceptance_06_locomotion_reproduces_velocity() {
    let pipeline = paper_pipeline();
    let config = RunConfig::defaults().unwrap();
    let gait = locomotion::simulate_locomotion(
        &pipeline.body,
        &config.friction(),
        &pipeline.drive,
        pipeline.dt,
    )
    .unwrap();
    let metrics = locomotion::gait_metrics(&gait, pipeline.period, &pipeline.body).unwrap();
    assert!(
        (metrics.mean_velocity_mm_s.abs() - 4.03).abs() <= 0.2,
        "velocity {}",
        metrics.mean_velocity_mm_s
    );
    assert!(
        (metrics.body_lengths_per_s.abs() - 0.0153).abs() <= 0.001,
        "BL/s {}",
        metrics.body_lengths_per_s
    );
    passed(
        6,
        "shipped friction calibration gives 4.03 +/- 0.2 mm/s and 0.0153 +/- 0.001 BL/s",
    );
}

#[test]
fn acceptance_07_locomotion_property_suite() {
    let start = Instant::now();
    let pipeline = paper_pipeline();
    let body = &pipeline.body;
    let dt = pipeline.dt;
    let period = pipeline.period;

    // Zero drive => zero displacement.
    let rest_drive = locomotion::Drive {
        dt_s: pipeline.drive.dt_s,
        commanded_mm: body
            .rest_lengths_mm
            .iter()
            .map(|&r| vec![r; 20_000])
            .collect(),
    };
    let still = locomotion::simulate_locomotion(
        body,
        &FrictionModel::with_ratio(0.3, 10.0),
        &rest_drive,
        dt,
    )
    .unwrap();
    for row in &still.foot_positions_mm {
        for (x, x0) in row.iter().zip(&still.foot_positions_mm[0]) {
            assert!((x - x0).abs() < 1e-9, "zero drive moved a foot");
        }
    }

    // Stride bound and monotonicity across the anisotropy range.
    let kinematic = pipeline.drive.peak_elongation_sum_mm(body);
    let mut previous = -f64::INFINITY;
    for ratio in [1.0, 2.0, 5.0, 10.0, 30.0, 100.0] {
        let gait = locomotion::simulate_locomotion(
            body,
            &FrictionModel::with_ratio(0.3, ratio),
            &pipeline.drive,
            dt,
        )
        .unwrap();
        let metrics = locomotion::gait_metrics(&gait, period, body).unwrap();
        let stride = metrics.stride_per_cycle_mm;
        assert!(
            stride.abs() <= kinematic * (1.0 + 1e-6),
            "ratio {ratio}: stride {stride} above bound {kinematic}"
        );
        assert!(
            stride >= previous - 1e-6,
            "ratio {ratio}: displacement not monotone ({stride} after {previous})"
        );
        previous = stride;
    }

    // Reflection symmetry: mirrored drive + swapped coefficients negates
    // the displacement (exact against the mirrored marker end).
    let friction = FrictionModel::with_ratio(0.3, 10.0);
    let swapped = FrictionModel {
        mu_forward: friction.mu_backward,
        mu_backward: friction.mu_forward,
        ..friction.clone()
    };
    let forward = locomotion::simulate_locomotion(body, &friction, &pipeline.drive, dt).unwrap();
    let mut mirrored_body = body.clone();
    mirrored_body.marker = MarkerEnd::LastFoot;
    let mirrored =
        locomotion::simulate_locomotion(&mirrored_body, &swapped, &pipeline.drive.reversed(), dt)
            .unwrap();
    let delta = |series: &[f64]| series.last().unwrap() - series.first().unwrap();
    let foot0: Vec<f64> = forward.foot_positions_mm.iter().map(|r| r[0]).collect();
    let d_exact = delta(&mirrored.head_mm()) + delta(&foot0);
    assert!(d_exact.abs() < 1e-6, "mirror identity violated: {d_exact}");
    let d_heads = delta(&mirrored.head_mm()) + delta(&forward.head_mm());
    assert!(
        d_heads.abs() <= 0.05 * delta(&forward.head_mm()).abs().max(1.0),
        "head displacement not negated: {d_heads}"
    );

    // Frictionless center of mass stays put.
    let frictionless = FrictionModel {
        mu_forward: 1e-12,
        mu_backward: 1e-12,
        ..FrictionModel::default()
    };
    let drifting =
        locomotion::simulate_locomotion(body, &frictionless, &pipeline.drive, dt).unwrap();
    let com = |row: &Vec<f64>| -> f64 {
        row.iter()
            .zip(&body.foot_masses_g)
            .map(|(x, m)| x * m)
            .sum::<f64>()
            / body.foot_masses_g.iter().sum::<f64>()
    };
    let drift =
        com(drifting.foot_positions_mm.last().unwrap()) - com(&drifting.foot_positions_mm[0]);
    // 1e-4 mm over 132k steps is rounding accumulation, five orders below
    // one stride.
    assert!(drift.abs() < 1e-4, "COM drifted {drift}");

    // Halving dt moves the velocity by less than 1 %.
    let v_at = |dt: f64| -> f64 {
        let gait = locomotion::simulate_locomotion(body, &friction, &pipeline.drive, dt).unwrap();
        locomotion::gait_metrics(&gait, period, body)
            .unwrap()
            .mean_velocity_mm_s
    };
    let v1 = v_at(dt);
    let v2 = v_at(dt / 2.0);
    assert!(
        (v1 - v2).abs() / v1.abs() < 0.01,
        "dt sensitivity {v1} vs {v2}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    passed(7, "locomotion properties hold, under 60 s");
}

/// Deterministic valid-netlist generator for the round-trip criterion.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 11
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let frac = (self.next() % 1_000_000) as f64 / 1_000_000.0;
        lo + (hi - lo) * frac
    }

    fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next() as usize) % (hi - lo)
    }
}

fn random_netlist(rng: &mut Lcg) -> Netlist {
    let n = rng.range(1, 9);
    let thickness = rng.uniform(1.0, 3.0);
    let pressure = rng.uniform(0.5, 4.0);
    let tube = rng.uniform(80.0, 300.0);
    let mut bellow = BellowSpec::with_thickness(thickness).unwrap();
    if rng.range(0, 2) == 1 {
        bellow.pitch_mm = rng.uniform(1.0, 4.0);
        bellow.length_mm = rng.uniform(20.0, 50.0);
    }
    let mut netlist = Netlist::ring_oscillator(n, bellow, pressure, tube).unwrap();
    if rng.range(0, 2) == 1 {
        let last = netlist.modules.len() - 1;
        netlist.modules[last].output_ratio = rng.uniform(0.01, 1.0);
    }
    for i in 0..rng.range(0, 6) {
        let id = format!("T{}", i + 1);
        let source = format!("M{}", rng.range(1, n + 1));
        netlist.tubes.push(plg_core::TubeSpec {
            from: plg_core::Endpoint::new(source.as_str(), plg_core::Socket::OutNext),
            to: plg_core::Endpoint::new(id.as_str(), plg_core::Socket::T),
            length_mm: tube,
            inner_diameter_mm: 2.0,
        });
        netlist.supplies.push(plg_core::SupplySpec {
            module: id.as_str().into(),
            pressure_bar: pressure,
        });
        netlist.stoppers.push(plg_core::StopperSpec {
            module: id.as_str().into(),
            socket: plg_core::Socket::SpThru,
        });
        netlist
            .modules
            .push(plg_core::ModuleSpec::buffer(None).with_id(id.as_str()));
    }
    netlist.canonicalize();
    netlist
}

#[test]
fn acceptance_08_parser_roundtrip_and_golden_file() {
    let mut rng = Lcg(0x5eed_cafe);
    for case in 0..1000 {
        let netlist = random_netlist(&mut rng);
        assert!(netlist.validate().is_valid(), "case {case} invalid");
        let text = dsl::serialize(&netlist).unwrap();
        let parsed = dsl::parse(&text).unwrap();
        assert_eq!(parsed, netlist, "case {case} did not round-trip");
    }

    let golden = std::fs::read_to_string(fixture("ring4.plg")).unwrap();
    let canonical = dsl::serialize(&ring4()).unwrap();
    assert_eq!(canonical, golden, "ring4.plg golden file drifted");
    passed(
        8,
        "1000 generated netlists round-trip, golden file byte-stable",
    );
}

#[test]
fn acceptance_09_end_to_end_determinism() {
    let run = |dir: &std::path::Path| {
        Command::cargo_bin("plg")
            .unwrap()
            .arg("simulate-robot")
            .arg("--out")
            .arg(dir)
            .assert()
            .success();
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run(dir_a.path());
    run(dir_b.path());
    for name in ["pressure.csv", "logic.csv", "gait.csv", "metrics.csv"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    passed(9, "two simulate-robot runs produce byte-identical CSVs");
}
