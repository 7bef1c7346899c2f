//! Bellow actuator elongation model.
//!
//! Characterization data is fitted with a three-parameter saturating
//! exponential, `x(AD) = x_sat - A * exp(-AD / tau)`, where AD is the
//! actuation duration in milliseconds. The offset form (no forced zero
//! intercept) absorbs the fast initial inflation phase; the fitted curve
//! covers the plateauing tail the data actually shows.

use std::fmt;

use thiserror::Error;

/// Geometry of one printed bellow. Only the wall thickness varies between
/// the characterized actuators; the remaining dimensions default to the
/// printed design.
#[derive(Debug, Clone, PartialEq)]
pub struct BellowSpec {
    pub wall_thickness_mm: f64,
    pub pitch_mm: f64,
    pub external_angle_deg: f64,
    pub internal_angle_deg: f64,
    pub outer_diameter_mm: f64,
    pub length_mm: f64,
}

impl BellowSpec {
    pub const DEFAULT_PITCH_MM: f64 = 2.65;
    pub const DEFAULT_EXTERNAL_ANGLE_DEG: f64 = 50.0;
    pub const DEFAULT_INTERNAL_ANGLE_DEG: f64 = 61.0;
    pub const DEFAULT_OUTER_DIAMETER_MM: f64 = 28.0;
    pub const DEFAULT_LENGTH_MM: f64 = 33.0;

    /// A bellow with the given valley wall thickness and default geometry.
    ///
    /// Accepted thickness range is 1.0 mm to 3.0 mm; the characterized set
    /// is {1.3, 1.6, 1.9} mm.
    pub fn with_thickness(wall_thickness_mm: f64) -> Result<BellowSpec, ActuatorError> {
        if !(1.0..=3.0).contains(&wall_thickness_mm) {
            return Err(ActuatorError::InvalidThickness {
                thickness_mm: wall_thickness_mm,
            });
        }
        Ok(BellowSpec {
            wall_thickness_mm,
            pitch_mm: Self::DEFAULT_PITCH_MM,
            external_angle_deg: Self::DEFAULT_EXTERNAL_ANGLE_DEG,
            internal_angle_deg: Self::DEFAULT_INTERNAL_ANGLE_DEG,
            outer_diameter_mm: Self::DEFAULT_OUTER_DIAMETER_MM,
            length_mm: Self::DEFAULT_LENGTH_MM,
        })
    }

    pub fn preset_t13() -> BellowSpec {
        BellowSpec::with_thickness(1.3).unwrap()
    }

    /// The robot's bellow (the thickness selected for the final modules).
    pub fn preset_t16() -> BellowSpec {
        BellowSpec::with_thickness(1.6).unwrap()
    }

    pub fn preset_t19() -> BellowSpec {
        BellowSpec::with_thickness(1.9).unwrap()
    }
}

/// One measured deformation sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElongationDataPoint {
    pub pressure_bar: f64,
    pub wall_thickness_mm: f64,
    pub actuation_duration_ms: f64,
    pub deformation_mm: f64,
}

/// Fitted saturating-exponential elongation response for one
/// (pressure, wall thickness) condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ElongationModel {
    pub x_sat_mm: f64,
    pub amplitude_mm: f64,
    pub tau_ms: f64,
    pub pressure_bar: f64,
    pub wall_thickness_mm: f64,
    pub fit_rmse_mm: f64,
}

impl ElongationModel {
    /// Predicted elongation at an actuation duration, clamped below at 0.
    pub fn elongation_at(&self, actuation_duration_ms: f64) -> f64 {
        let x = self.x_sat_mm - self.amplitude_mm * (-actuation_duration_ms / self.tau_ms).exp();
        x.max(0.0)
    }
}

/// Binary bellow integrity outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrityStatus {
    Ok,
    FatigueFailure,
}

impl fmt::Display for IntegrityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegrityStatus::Ok => f.write_str("OK"),
            IntegrityStatus::FatigueFailure => f.write_str("FATIGUE_FAILURE"),
        }
    }
}

/// Thin-wall bellows lose elastic recovery under long actuation at high
/// pressure: failure iff thickness <= 1.3 mm, pressure >= 2.0 bar and
/// actuation >= 1000 ms.
pub fn check_integrity(
    wall_thickness_mm: f64,
    pressure_bar: f64,
    actuation_duration_ms: f64,
) -> IntegrityStatus {
    if wall_thickness_mm <= 1.3 && pressure_bar >= 2.0 && actuation_duration_ms >= 1000.0 {
        IntegrityStatus::FatigueFailure
    } else {
        IntegrityStatus::Ok
    }
}

/// Least-squares fit of `x(AD) = x_sat - A * exp(-AD / tau)`.
///
/// All points must share one (pressure, thickness) condition and have
/// distinct actuation durations. The fit is a damped Gauss-Newton descent
/// from a fixed starting point, so results are reproducible.
pub fn fit_elongation(points: &[ElongationDataPoint]) -> Result<ElongationModel, ActuatorError> {
    if points.len() < 3 {
        return Err(ActuatorError::Underdetermined {
            found: points.len(),
        });
    }
    let pressure = points[0].pressure_bar;
    let thickness = points[0].wall_thickness_mm;
    if points
        .iter()
        .any(|p| p.pressure_bar != pressure || p.wall_thickness_mm != thickness)
    {
        return Err(ActuatorError::MixedGroup);
    }
    let mut durations: Vec<f64> = points.iter().map(|p| p.actuation_duration_ms).collect();
    durations.sort_by(f64::total_cmp);
    if durations.windows(2).any(|w| w[0] == w[1]) {
        return Err(ActuatorError::DuplicateDurations);
    }
    let deformations: Vec<f64> = points.iter().map(|p| p.deformation_mm).collect();
    let min_y = deformations.iter().copied().fold(f64::INFINITY, f64::min);
    let max_y = deformations
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max_y == min_y {
        return Err(ActuatorError::DegenerateData);
    }

    // Fixed initialization keeps the solver deterministic.
    let mut x_sat = max_y + 0.5;
    let mut amplitude = x_sat - min_y;
    let mut tau = 300.0;

    let residuals = |xs: f64, a: f64, t: f64| -> Vec<f64> {
        points
            .iter()
            .map(|p| xs - a * (-p.actuation_duration_ms / t).exp() - p.deformation_mm)
            .collect()
    };
    let sum_sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut lambda = 1e-3;
    let mut cost = sum_sq(&residuals(x_sat, amplitude, tau));
    for _ in 0..200 {
        // Jacobian of the residuals wrt (x_sat, amplitude, tau).
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for p in points {
            let e = (-p.actuation_duration_ms / tau).exp();
            let r = x_sat - amplitude * e - p.deformation_mm;
            let grad = [
                1.0,
                -e,
                -amplitude * e * p.actuation_duration_ms / (tau * tau),
            ];
            for i in 0..3 {
                jtr[i] += grad[i] * r;
                for j in 0..3 {
                    jtj[i][j] += grad[i] * grad[j];
                }
            }
        }
        let mut damped = jtj;
        for (i, row) in damped.iter_mut().enumerate() {
            row[i] += lambda * jtj[i][i].max(1e-12);
        }
        let Some(step) = solve3(damped, [-jtr[0], -jtr[1], -jtr[2]]) else {
            lambda *= 10.0;
            continue;
        };
        let candidate = (
            x_sat + step[0],
            (amplitude + step[1]).max(1e-9),
            (tau + step[2]).max(1e-6),
        );
        let new_cost = sum_sq(&residuals(candidate.0, candidate.1, candidate.2));
        if new_cost < cost {
            let delta = (cost - new_cost).abs();
            x_sat = candidate.0;
            amplitude = candidate.1;
            tau = candidate.2;
            cost = new_cost;
            lambda = (lambda * 0.5).max(1e-12);
            if delta < 1e-15 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let rmse = (cost / points.len() as f64).sqrt();
    Ok(ElongationModel {
        x_sat_mm: x_sat,
        amplitude_mm: amplitude,
        tau_ms: tau,
        pressure_bar: pressure,
        wall_thickness_mm: thickness,
        fit_rmse_mm: rmse,
    })
}

/// Solves a 3x3 linear system by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..3).rev() {
        let mut sum = b[col];
        for k in col + 1..3 {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
    }
    Some(x)
}

/// Fitted models keyed by pressure, for interpolating the drive target
/// between the characterized anchors.
#[derive(Debug, Clone)]
pub struct ElongationMap {
    anchors: Vec<ElongationModel>,
}

impl ElongationMap {
    /// Builds a map from one or more fitted models; anchors are sorted by
    /// pressure and must not repeat pressures.
    pub fn new(mut anchors: Vec<ElongationModel>) -> Result<ElongationMap, ActuatorError> {
        if anchors.is_empty() {
            return Err(ActuatorError::Underdetermined { found: 0 });
        }
        anchors.sort_by(|a, b| a.pressure_bar.total_cmp(&b.pressure_bar));
        if anchors
            .windows(2)
            .any(|w| w[0].pressure_bar == w[1].pressure_bar)
        {
            return Err(ActuatorError::MixedGroup);
        }
        Ok(ElongationMap { anchors })
    }

    pub fn anchors(&self) -> &[ElongationModel] {
        &self.anchors
    }

    /// Saturation elongation and time constant at a drive pressure, linear
    /// between anchors and clamped to the fitted domain.
    pub fn target_at(&self, pressure_bar: f64) -> (f64, f64) {
        let first = self.anchors.first().unwrap();
        let last = self.anchors.last().unwrap();
        if pressure_bar <= first.pressure_bar {
            return (first.x_sat_mm, first.tau_ms);
        }
        if pressure_bar >= last.pressure_bar {
            return (last.x_sat_mm, last.tau_ms);
        }
        let hi = self
            .anchors
            .iter()
            .position(|m| m.pressure_bar >= pressure_bar)
            .unwrap();
        let (a, b) = (&self.anchors[hi - 1], &self.anchors[hi]);
        let f = (pressure_bar - a.pressure_bar) / (b.pressure_bar - a.pressure_bar);
        (
            a.x_sat_mm + f * (b.x_sat_mm - a.x_sat_mm),
            a.tau_ms + f * (b.tau_ms - a.tau_ms),
        )
    }
}

/// Integrates the first-order elongation response to a pressure drive
/// sampled on a uniform grid of `dt_s` seconds.
///
/// While the drive is at or above `p_threshold_bar` the elongation relaxes
/// toward the interpolated saturation value with the fitted time constant;
/// below the threshold it releases toward zero with `tau_release_ms`.
pub fn elongation_dynamic(
    models: &ElongationMap,
    drive_pressure_bar: &[f64],
    dt_s: f64,
    tau_release_ms: f64,
    p_threshold_bar: f64,
) -> Vec<f64> {
    let dt_ms = dt_s * 1e3;
    let mut out = Vec::with_capacity(drive_pressure_bar.len());
    let mut e = 0.0f64;
    for (i, &p) in drive_pressure_bar.iter().enumerate() {
        if i > 0 {
            if p >= p_threshold_bar {
                let (target, tau_ms) = models.target_at(p);
                e += dt_ms * (target - e) / tau_ms;
            } else {
                e -= dt_ms * e / tau_release_ms;
            }
            e = e.max(0.0);
        }
        out.push(e);
    }
    out
}

/// Default release time constant: 95% release within the 800 ms release
/// window used throughout the characterization runs.
pub const DEFAULT_TAU_RELEASE_MS: f64 = 267.0;

/// The eight textual characterization points for the 1.6 mm bellow.
pub fn characterization_t16() -> Vec<ElongationDataPoint> {
    let rows = [
        (2.0, 200.0, 9.2),
        (2.0, 400.0, 10.8),
        (2.0, 600.0, 11.6),
        (2.0, 800.0, 11.9),
        (2.3, 200.0, 10.1),
        (2.3, 400.0, 12.3),
        (2.3, 600.0, 13.0),
        (2.3, 800.0, 14.0),
    ];
    rows.iter()
        .map(|&(p, ad, d)| ElongationDataPoint {
            pressure_bar: p,
            wall_thickness_mm: 1.6,
            actuation_duration_ms: ad,
            deformation_mm: d,
        })
        .collect()
}

/// Reads characterization CSV with header
/// `pressure_bar,thickness_mm,ad_ms,deformation_mm`.
pub fn read_characterization_csv(text: &str) -> Result<Vec<ElongationDataPoint>, ActuatorError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ActuatorError::MalformedCsv {
        line: 1,
        reason: "empty file".to_string(),
    })?;
    if header.trim() != "pressure_bar,thickness_mm,ad_ms,deformation_mm" {
        return Err(ActuatorError::MalformedCsv {
            line: 1,
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(ActuatorError::MalformedCsv {
                line: i + 1,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let mut values = [0.0f64; 4];
        for (slot, field) in values.iter_mut().zip(&fields) {
            *slot = field
                .trim()
                .parse::<f64>()
                .map_err(|_| ActuatorError::MalformedCsv {
                    line: i + 1,
                    reason: format!("not a number: {field:?}"),
                })?;
        }
        points.push(ElongationDataPoint {
            pressure_bar: values[0],
            wall_thickness_mm: values[1],
            actuation_duration_ms: values[2],
            deformation_mm: values[3],
        });
    }
    Ok(points)
}

/// Groups characterization points by (pressure, thickness), in ascending
/// order of the pair.
pub fn group_by_condition(
    points: &[ElongationDataPoint],
) -> Vec<((f64, f64), Vec<ElongationDataPoint>)> {
    let mut groups: Vec<((f64, f64), Vec<ElongationDataPoint>)> = Vec::new();
    for p in points {
        let key = (p.pressure_bar, p.wall_thickness_mm);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(*p),
            None => groups.push((key, vec![*p])),
        }
    }
    groups.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
    groups
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActuatorError {
    #[error("wall thickness {thickness_mm} mm outside accepted range [1.0, 3.0]")]
    InvalidThickness { thickness_mm: f64 },
    #[error("need at least 3 data points for a 3-parameter fit, found {found}")]
    Underdetermined { found: usize },
    #[error("all deformations are equal; saturation curve is undefined")]
    DegenerateData,
    #[error("data points mix more than one (pressure, thickness) condition")]
    MixedGroup,
    #[error("actuation durations must be distinct")]
    DuplicateDurations,
    #[error("malformed characterization CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
}
