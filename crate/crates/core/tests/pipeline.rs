//! Cross-module integration: pressure trace -> bellow drive -> gait.

use plg_core::actuator::{self, ElongationMap};
use plg_core::locomotion::{self, BodyConfig, FrictionModel};
use plg_core::pneumo::{self, PneumoParams};
use plg_core::{BellowSpec, Netlist};

fn calibrated_ring_trace() -> (pneumo::PressureTrace, PneumoParams, f64) {
    let params = pneumo::calibrate(5.98, 4, &PneumoParams::default()).unwrap();
    let netlist = Netlist::ring_oscillator(4, BellowSpec::preset_t16(), 2.0, 140.0).unwrap();
    let trace = pneumo::simulate_pressure(&netlist, &params, 66.0).unwrap();
    let logic = pneumo::digitize(&trace, &params);
    let period = plg_core::logic::measure_period(&logic, "M1.OUT", 24.0).unwrap();
    (trace, params, period)
}

fn fitted_models() -> ElongationMap {
    let groups = actuator::group_by_condition(&actuator::characterization_t16());
    let models = groups
        .iter()
        .map(|(_, pts)| actuator::fit_elongation(pts).unwrap())
        .collect();
    ElongationMap::new(models).unwrap()
}

#[test]
fn drive_segments_rise_in_stage_order_and_release_together() {
    let (trace, params, period) = calibrated_ring_trace();
    let body = BodyConfig::robot_default();
    let mapping: Vec<String> = (1..=4).map(|i| format!("M{i}.OUT")).collect();
    let drive = locomotion::build_drive(
        &trace,
        &mapping,
        &fitted_models(),
        &body,
        actuator::DEFAULT_TAU_RELEASE_MS,
        params.p_threshold_on_bar,
    )
    .unwrap();

    // Within one settled cycle the four commanded lengths start rising one
    // stage delay apart.
    let dt = drive.dt_s;
    let start = (24.0 / dt) as usize;
    let rise_start = |segment: usize| -> f64 {
        let series = &drive.commanded_mm[segment];
        let rest = body.rest_lengths_mm[segment];
        // First index after `start` where the commanded length leaves rest
        // after previously sitting at it.
        let mut idle = false;
        for i in start..series.len() {
            let elongated = series[i] - rest > 0.5;
            if !elongated {
                idle = true;
            } else if idle {
                return i as f64 * dt;
            }
        }
        panic!("segment {segment} never rises after settling");
    };
    // Rises are staggered by the (rise) stage delay: uniform gaps, and the
    // whole fan fits inside one half period.
    let t: Vec<f64> = (0..4).map(rise_start).collect();
    let gaps: Vec<f64> = (1..4).map(|i| t[i] - t[i - 1]).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(mean_gap > 0.0, "segments rise out of order: {t:?}");
    for (i, gap) in gaps.iter().enumerate() {
        assert!(
            (gap - mean_gap).abs() < mean_gap * 0.25,
            "stage gap {i}: {gap} vs mean {mean_gap}"
        );
    }
    assert!(t[3] - t[0] < period * 0.75, "rise fan too wide");

    // All four release within a fall-delay fan, much shorter than the
    // rise fan.
    let fall_start = |segment: usize| -> f64 {
        let series = &drive.commanded_mm[segment];
        let rest = body.rest_lengths_mm[segment];
        let from = (t[3] / dt) as usize;
        for i in from..series.len() {
            let near_peak = series[i] - rest > 10.0;
            if near_peak {
                // first later index where it starts dropping
                for j in i..series.len() - 1 {
                    if series[j + 1] < series[j] {
                        return j as f64 * dt;
                    }
                }
            }
        }
        panic!("segment {segment} never releases");
    };
    let f: Vec<f64> = (0..4).map(fall_start).collect();
    let fall_span = f.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
        - f.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let rise_span = t[3] - t[0];
    assert!(
        fall_span < rise_span * 0.6,
        "releases span {fall_span}, rises span {rise_span}"
    );
}

#[test]
fn all_zero_trace_commands_rest_lengths() {
    let trace = pneumo::PressureTrace {
        nodes: (1..=4).map(|i| format!("M{i}.OUT")).collect(),
        times_s: (0..100).map(|i| i as f64 * 1e-3).collect(),
        pressures_bar: (0..100).map(|_| vec![0.0; 4]).collect(),
    };
    let body = BodyConfig::robot_default();
    let mapping: Vec<String> = (1..=4).map(|i| format!("M{i}.OUT")).collect();
    let drive =
        locomotion::build_drive(&trace, &mapping, &fitted_models(), &body, 267.0, 1.0).unwrap();
    for (series, rest) in drive.commanded_mm.iter().zip(&body.rest_lengths_mm) {
        assert!(series.iter().all(|c| c == rest));
    }
}

#[test]
fn missing_mapping_entry_is_reported() {
    let (trace, params, _) = calibrated_ring_trace();
    let body = BodyConfig::robot_default();
    let mapping: Vec<String> = vec!["M1.OUT".into(), "M2.OUT".into(), "M3.OUT".into()];
    let err = locomotion::build_drive(
        &trace,
        &mapping,
        &fitted_models(),
        &body,
        actuator::DEFAULT_TAU_RELEASE_MS,
        params.p_threshold_on_bar,
    );
    assert!(matches!(
        err,
        Err(locomotion::LocomotionError::UnmappedSegment { .. })
    ));
}

#[test]
fn full_pipeline_reaches_paper_speed_with_calibrated_ratio() {
    let (trace, params, period) = calibrated_ring_trace();
    let body = BodyConfig::robot_default();
    let mapping: Vec<String> = (1..=4).map(|i| format!("M{i}.OUT")).collect();
    let drive = locomotion::build_drive(
        &trace,
        &mapping,
        &fitted_models(),
        &body,
        actuator::DEFAULT_TAU_RELEASE_MS,
        params.p_threshold_on_bar,
    )
    .unwrap();
    let ratio = locomotion::calibrate_friction_ratio(
        &body,
        0.3,
        &drive,
        locomotion::DEFAULT_DT_S,
        period,
        4.03,
        1.0,
        100.0,
    )
    .unwrap();
    let friction = FrictionModel::with_ratio(0.3, ratio);
    let gait = locomotion::simulate_locomotion(&body, &friction, &drive, locomotion::DEFAULT_DT_S)
        .unwrap();
    let metrics = locomotion::gait_metrics(&gait, period, &body).unwrap();
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
}
