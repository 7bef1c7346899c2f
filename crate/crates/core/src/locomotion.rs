//! 1-D quasi-dynamic peristaltic body.
//!
//! The body is a chain of point-mass feet joined by actuated segments.
//! Each segment pushes its two feet apart (or pulls them together) with a
//! spring-damper force toward its commanded length; each foot sees
//! smoothed anisotropic Coulomb friction, stronger against backward slip
//! than forward, which rectifies the peristaltic wave into net motion.
//!
//! Internally forces are in newtons; positions and lengths stay in mm,
//! masses in grams, so accelerations are `F * 1e6 / m_g` in mm/s^2.

use thiserror::Error;

use crate::actuator::ElongationMap;
use crate::pneumo::PressureTrace;

/// Default integration step. Half a millisecond keeps the velocity
/// metrics converged to well under 1 % against step halving; at 1 ms the
/// stick-release timing quantization still shows.
pub const DEFAULT_DT_S: f64 = 5e-4;

/// Anisotropic Coulomb friction of the setae feet.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionModel {
    pub mu_forward: f64,
    pub mu_backward: f64,
    /// Velocity scale of the tanh regularization, mm/s.
    pub v_smoothing_mm_s: f64,
    /// Gravitational acceleration, mm/s^2.
    pub gravity_mm_s2: f64,
}

impl Default for FrictionModel {
    fn default() -> Self {
        FrictionModel {
            mu_forward: 0.3,
            mu_backward: 0.3,
            v_smoothing_mm_s: 0.1,
            gravity_mm_s2: 9810.0,
        }
    }
}

impl FrictionModel {
    pub fn with_ratio(mu_forward: f64, ratio: f64) -> FrictionModel {
        FrictionModel {
            mu_forward,
            mu_backward: mu_forward * ratio,
            ..FrictionModel::default()
        }
    }

    /// Implicit (trapezoidal) friction update for one foot: solves
    ///
    /// `m (v' - v_star) / dt = -mu N (tanh(v_star/vs) + tanh(v'/vs)) / 2`
    ///
    /// for `v'`, clamping to 0 when the friction impulse would carry the
    /// foot through zero (stiction). The residual is strictly increasing
    /// in `v'`, so the root is unique and lies between 0 and `v_star`:
    /// friction brakes a foot within the step but never reverses it, which
    /// keeps the asymmetric force dissipative regardless of step size.
    /// Safeguarded Newton on the bracket.
    fn implicit_brake(&self, mass_kg: f64, mass_g: f64, v_star_mm_s: f64, dt_s: f64) -> f64 {
        if v_star_mm_s == 0.0 {
            return 0.0;
        }
        let mu = if v_star_mm_s > 0.0 {
            self.mu_forward
        } else {
            self.mu_backward
        };
        let normal_n = mass_g * 1e-3 * self.gravity_mm_s2 * 1e-3;
        let limit_n = mu * normal_n;
        let m_over_dt = mass_kg / (dt_s * 1e3);
        let vs = self.v_smoothing_mm_s;
        let half_star = 0.5 * limit_n * (v_star_mm_s / vs).tanh();

        let g =
            |x: f64| m_over_dt * (x - v_star_mm_s) + half_star + 0.5 * limit_n * (x / vs).tanh();
        // Stick: even zero end-velocity cannot absorb the impulse.
        if v_star_mm_s > 0.0 && g(0.0) >= 0.0 {
            return 0.0;
        }
        if v_star_mm_s < 0.0 && g(0.0) <= 0.0 {
            return 0.0;
        }

        let (mut lo, mut hi) = if v_star_mm_s > 0.0 {
            (0.0, v_star_mm_s)
        } else {
            (v_star_mm_s, 0.0)
        };
        let mut x = 0.5 * (lo + hi);
        for _ in 0..60 {
            let gx = g(x);
            if gx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let sech = 1.0 / (x / vs).cosh();
            let slope = m_over_dt + 0.5 * limit_n * sech * sech / vs;
            let mut next = x - gx / slope;
            if !(lo..=hi).contains(&next) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-12 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }
}

/// Which end of the chain carries the tracking marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerEnd {
    FirstFoot,
    LastFoot,
}

/// Segmented body: `n` segments need `n + 1` feet.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyConfig {
    pub rest_lengths_mm: Vec<f64>,
    pub foot_masses_g: Vec<f64>,
    pub stiffness_n_per_mm: f64,
    pub damping_ns_per_mm: f64,
    pub marker: MarkerEnd,
}

impl BodyConfig {
    /// Uniform body: `n` equal segments, total mass split over the feet.
    pub fn uniform(
        n_segments: usize,
        total_length_mm: f64,
        total_mass_g: f64,
    ) -> Result<BodyConfig, LocomotionError> {
        if n_segments < 1 {
            return Err(LocomotionError::InvalidBody {
                reason: "need at least one segment".to_string(),
            });
        }
        Ok(BodyConfig {
            rest_lengths_mm: vec![total_length_mm / n_segments as f64; n_segments],
            foot_masses_g: vec![total_mass_g / (n_segments + 1) as f64; n_segments + 1],
            stiffness_n_per_mm: 0.5,
            damping_ns_per_mm: 0.05,
            marker: MarkerEnd::LastFoot,
        })
    }

    /// The desk-scale robot: 4 segments, 263 mm, 191 g.
    pub fn robot_default() -> BodyConfig {
        BodyConfig::uniform(4, 263.0, 191.0).unwrap()
    }

    pub fn n_segments(&self) -> usize {
        self.rest_lengths_mm.len()
    }

    pub fn total_rest_length_mm(&self) -> f64 {
        self.rest_lengths_mm.iter().sum()
    }

    fn check(&self) -> Result<(), LocomotionError> {
        let n = self.n_segments();
        let ok = n >= 1
            && self.foot_masses_g.len() == n + 1
            && self.rest_lengths_mm.iter().all(|&l| l > 0.0)
            && self.foot_masses_g.iter().all(|&m| m > 0.0)
            && self.stiffness_n_per_mm > 0.0
            && self.damping_ns_per_mm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(LocomotionError::InvalidBody {
                reason: "segment lengths and masses must be positive, feet = segments + 1"
                    .to_string(),
            })
        }
    }
}

/// Commanded segment lengths on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub dt_s: f64,
    /// `commanded_mm[segment][step]`.
    pub commanded_mm: Vec<Vec<f64>>,
}

impl Drive {
    pub fn duration_s(&self) -> f64 {
        let steps = self.commanded_mm.first().map(Vec::len).unwrap_or(0);
        if steps == 0 {
            0.0
        } else {
            (steps - 1) as f64 * self.dt_s
        }
    }

    /// Linear interpolation of segment `i` at time `t`.
    fn sample(&self, segment: usize, t_s: f64) -> f64 {
        let series = &self.commanded_mm[segment];
        let pos = t_s / self.dt_s;
        let i = (pos.floor() as usize).min(series.len() - 1);
        if i + 1 >= series.len() {
            return series[series.len() - 1];
        }
        let frac = pos - i as f64;
        series[i] + (series[i + 1] - series[i]) * frac
    }

    /// Reverses the spatial order of the segments (mirror drive).
    pub fn reversed(&self) -> Drive {
        Drive {
            dt_s: self.dt_s,
            commanded_mm: self.commanded_mm.iter().rev().cloned().collect(),
        }
    }

    /// Largest elongation above rest length per segment, summed.
    pub fn peak_elongation_sum_mm(&self, body: &BodyConfig) -> f64 {
        self.commanded_mm
            .iter()
            .zip(&body.rest_lengths_mm)
            .map(|(series, rest)| series.iter().map(|c| c - rest).fold(0.0f64, f64::max))
            .sum()
    }
}

/// Composes commanded segment lengths from a pressure trace: segment `i`
/// follows `rest + elongation` of the node `mapping[i]` names.
pub fn build_drive(
    trace: &PressureTrace,
    mapping: &[String],
    models: &ElongationMap,
    body: &BodyConfig,
    tau_release_ms: f64,
    p_threshold_bar: f64,
) -> Result<Drive, LocomotionError> {
    body.check()?;
    if mapping.len() != body.n_segments() {
        return Err(LocomotionError::UnmappedSegment {
            segment: mapping.len().min(body.n_segments()),
            node: String::new(),
        });
    }
    let mut commanded = Vec::with_capacity(mapping.len());
    for (segment, node) in mapping.iter().enumerate() {
        let series = trace
            .series(node)
            .ok_or_else(|| LocomotionError::UnmappedSegment {
                segment,
                node: node.clone(),
            })?;
        let elongation = crate::actuator::elongation_dynamic(
            models,
            &series,
            trace.dt_s(),
            tau_release_ms,
            p_threshold_bar,
        );
        let rest = body.rest_lengths_mm[segment];
        commanded.push(elongation.into_iter().map(|e| rest + e).collect());
    }
    Ok(Drive {
        dt_s: trace.dt_s(),
        commanded_mm: commanded,
    })
}

/// Foot positions over time.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitTrace {
    pub times_s: Vec<f64>,
    /// `foot_positions_mm[step][foot]`.
    pub foot_positions_mm: Vec<Vec<f64>>,
    pub marker: MarkerEnd,
}

impl GaitTrace {
    pub fn n_feet(&self) -> usize {
        self.foot_positions_mm.first().map(Vec::len).unwrap_or(0)
    }

    /// Marker ("head") position series.
    pub fn head_mm(&self) -> Vec<f64> {
        let idx = match self.marker {
            MarkerEnd::FirstFoot => 0,
            MarkerEnd::LastFoot => self.n_feet() - 1,
        };
        self.foot_positions_mm.iter().map(|row| row[idx]).collect()
    }

    pub fn duration_s(&self) -> f64 {
        self.times_s.last().copied().unwrap_or(0.0)
    }

    /// CSV rendering: `time_s,foot0_mm,...,footN_mm,head_mm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s");
        for i in 0..self.n_feet() {
            out.push_str(&format!(",foot{i}_mm"));
        }
        out.push_str(",head_mm\n");
        let head = self.head_mm();
        for ((time, row), h) in self.times_s.iter().zip(&self.foot_positions_mm).zip(&head) {
            out.push_str(&format!("{time:.6}"));
            for x in row {
                out.push_str(&format!(",{x:.6}"));
            }
            out.push_str(&format!(",{h:.6}\n"));
        }
        out
    }

    /// Parses the CSV form produced by [`GaitTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<GaitTrace, LocomotionError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| LocomotionError::MalformedCsv {
            line: 1,
            reason: "empty file".into(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"time_s") || cols.last() != Some(&"head_mm") {
            return Err(LocomotionError::MalformedCsv {
                line: 1,
                reason: "header must be time_s,foot0_mm,...,head_mm".into(),
            });
        }
        let n_feet = cols.len() - 2;
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(LocomotionError::MalformedCsv {
                    line: i + 2,
                    reason: "wrong number of fields".into(),
                });
            }
            let parse = |s: &str| -> Result<f64, LocomotionError> {
                s.parse::<f64>().map_err(|_| LocomotionError::MalformedCsv {
                    line: i + 2,
                    reason: format!("not a number: {s:?}"),
                })
            };
            times.push(parse(fields[0])?);
            let row: Result<Vec<f64>, _> = fields[1..=n_feet].iter().map(|s| parse(s)).collect();
            rows.push(row?);
        }
        Ok(GaitTrace {
            times_s: times,
            foot_positions_mm: rows,
            marker: MarkerEnd::LastFoot,
        })
    }
}

/// Aggregate gait numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitMetrics {
    pub mean_velocity_mm_s: f64,
    pub stride_per_cycle_mm: f64,
    pub body_lengths_per_s: f64,
}

/// Integrates the body under a commanded-length drive.
///
/// Semi-implicit Euler at `dt_s`, which must not exceed the drive grid
/// step. The body starts at rest at the commanded lengths.
pub fn simulate_locomotion(
    body: &BodyConfig,
    friction: &FrictionModel,
    drive: &Drive,
    dt_s: f64,
) -> Result<GaitTrace, LocomotionError> {
    body.check()?;
    if drive.commanded_mm.len() != body.n_segments() {
        return Err(LocomotionError::UnmappedSegment {
            segment: drive.commanded_mm.len().min(body.n_segments()),
            node: String::new(),
        });
    }
    if !(dt_s > 0.0) || dt_s > drive.dt_s + 1e-12 {
        return Err(LocomotionError::InvalidTimeStep {
            dt_s,
            drive_dt_s: drive.dt_s,
        });
    }
    if !(friction.mu_forward > 0.0 && friction.mu_backward > 0.0 && friction.v_smoothing_mm_s > 0.0)
    {
        return Err(LocomotionError::InvalidBody {
            reason: "friction coefficients and smoothing must be positive".to_string(),
        });
    }

    let n_feet = body.n_segments() + 1;
    let mut x = vec![0.0f64; n_feet];
    for i in 0..body.n_segments() {
        x[i + 1] = x[i] + drive.sample(i, 0.0);
    }
    let mut v = vec![0.0f64; n_feet];

    let steps = (drive.duration_s() / dt_s).floor() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut rows = Vec::with_capacity(steps + 1);
    times.push(0.0);
    rows.push(x.clone());

    // The damper and the near-zero slope of the tanh friction are far
    // stiffer than the time step, so the velocity update is split:
    //
    // Strang-composed over the step:
    //
    //   1. friction half-step per foot (FrictionModel::implicit_brake)
    //   2. springs explicit, damper trapezoidal:
    //        (M + dt/2*C) v* = (M - dt/2*C) v + dt * F_spring
    //   3. friction half-step again
    //
    // The friction solve's root always lies between 0 and the incoming
    // velocity, so friction can brake a foot within the step but never
    // reverse it; that keeps the asymmetric Coulomb force strictly
    // dissipative (an explicit update would chatter around v = 0 and pump
    // momentum). Positions then advance with the updated velocities.
    //
    // dt in seconds, forces in N, masses in kg, velocities in mm/s: F/m is
    // m/s^2, so force terms carry a factor 1e3 to stay in mm.
    let masses_kg: Vec<f64> = body.foot_masses_g.iter().map(|m| m * 1e-3).collect();
    let mut a = vec![vec![0.0f64; n_feet]; n_feet];
    let mut b = vec![0.0f64; n_feet];
    let mut spring = vec![0.0f64; n_feet];

    for step in 1..=steps {
        let t = step as f64 * dt_s;

        for f in spring.iter_mut() {
            *f = 0.0;
        }
        for i in 0..body.n_segments() {
            let length = x[i + 1] - x[i];
            // Midpoint drive sample keeps the explicit spring force
            // time-centered within the step.
            let commanded = drive.sample(i, t - 0.5 * dt_s);
            let f_seg = body.stiffness_n_per_mm * (commanded - length);
            spring[i] -= f_seg;
            spring[i + 1] += f_seg;
        }

        for j in 0..n_feet {
            v[j] = friction.implicit_brake(masses_kg[j], body.foot_masses_g[j], v[j], 0.5 * dt_s);
        }

        for row in a.iter_mut() {
            for entry in row.iter_mut() {
                *entry = 0.0;
            }
        }
        for j in 0..n_feet {
            a[j][j] = masses_kg[j];
            b[j] = masses_kg[j] * v[j] + dt_s * spring[j] * 1e3;
        }
        for i in 0..body.n_segments() {
            let c = 0.5 * dt_s * body.damping_ns_per_mm * 1e3;
            a[i][i] += c;
            a[i + 1][i + 1] += c;
            a[i][i + 1] -= c;
            a[i + 1][i] -= c;
            let rate = v[i + 1] - v[i];
            b[i] += c * rate;
            b[i + 1] -= c * rate;
        }
        solve_dense(&mut a, &mut b);

        for j in 0..n_feet {
            v[j] = friction.implicit_brake(masses_kg[j], body.foot_masses_g[j], b[j], 0.5 * dt_s);
        }

        for j in 0..n_feet {
            x[j] += v[j] * dt_s;
        }
        for i in 0..body.n_segments() {
            let length = x[i + 1] - x[i];
            if !(length > 0.0 && length < 3.0 * body.rest_lengths_mm[i]) || !length.is_finite() {
                return Err(LocomotionError::NumericalInstability {
                    segment: i,
                    time_s: t,
                    length_mm: length,
                });
            }
        }
        times.push(t);
        rows.push(x.clone());
    }

    Ok(GaitTrace {
        times_s: times,
        foot_positions_mm: rows,
        marker: body.marker,
    })
}

/// In-place Gaussian elimination with partial pivoting; the solution
/// replaces `b`. The systems here are tiny (feet count) and SPD.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum -= a[col][k] * b[k];
        }
        b[col] = sum / a[col][col];
    }
}

/// Velocity, stride and body-lengths-per-second from a gait trace.
///
/// Discards one period of settling, then requires at least three full
/// periods. Velocity is the least-squares slope of the marker position.
pub fn gait_metrics(
    trace: &GaitTrace,
    period_s: f64,
    body: &BodyConfig,
) -> Result<GaitMetrics, LocomotionError> {
    if !(period_s > 0.0) {
        return Err(LocomotionError::InvalidPeriod { period_s });
    }
    let settle = period_s;
    let duration = trace.duration_s();
    let whole_periods = ((duration - settle) / period_s).floor();
    if whole_periods < 3.0 {
        return Err(LocomotionError::TraceTooShort {
            duration_s: duration,
            needed_s: settle + 3.0 * period_s,
        });
    }
    let end = settle + whole_periods * period_s;
    let head = trace.head_mm();
    let window: Vec<(f64, f64)> = trace
        .times_s
        .iter()
        .zip(&head)
        .filter(|(t, _)| **t >= settle && **t <= end)
        .map(|(t, h)| (*t, *h))
        .collect();

    // Least-squares slope.
    let n = window.len() as f64;
    let mean_t = window.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_h = window.iter().map(|(_, h)| h).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, h) in &window {
        num += (t - mean_t) * (h - mean_h);
        den += (t - mean_t) * (t - mean_t);
    }
    let velocity = if den > 0.0 { num / den } else { 0.0 };

    let stride = (window.last().unwrap().1 - window.first().unwrap().1) / whole_periods;
    Ok(GaitMetrics {
        mean_velocity_mm_s: velocity,
        stride_per_cycle_mm: stride,
        body_lengths_per_s: velocity / body.total_rest_length_mm(),
    })
}

/// Tunes the backward/forward friction ratio (bisection over
/// `[lo, hi]`) until the simulated speed hits `target_speed_mm_s`.
///
/// Speed grows monotonically with the ratio, so the bracket is checked
/// first. Returns the calibrated ratio.
pub fn calibrate_friction_ratio(
    body: &BodyConfig,
    mu_forward: f64,
    drive: &Drive,
    dt_s: f64,
    period_s: f64,
    target_speed_mm_s: f64,
    ratio_lo: f64,
    ratio_hi: f64,
) -> Result<f64, LocomotionError> {
    let speed = |ratio: f64| -> Result<f64, LocomotionError> {
        let friction = FrictionModel::with_ratio(mu_forward, ratio);
        let trace = simulate_locomotion(body, &friction, drive, dt_s)?;
        Ok(gait_metrics(&trace, period_s, body)?
            .mean_velocity_mm_s
            .abs())
    };
    let lo_speed = speed(ratio_lo)?;
    let hi_speed = speed(ratio_hi)?;
    if !(lo_speed <= target_speed_mm_s && target_speed_mm_s <= hi_speed) {
        return Err(LocomotionError::CalibrationFailed {
            reason: format!(
                "target {target_speed_mm_s} mm/s outside bracket [{lo_speed:.3}, {hi_speed:.3}] mm/s"
            ),
        });
    }
    let (mut lo, mut hi) = (ratio_lo, ratio_hi);
    let mut best = (lo, f64::INFINITY);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let s = speed(mid)?;
        let err = (s - target_speed_mm_s).abs();
        if err < best.1 {
            best = (mid, err);
        }
        if err <= target_speed_mm_s * 1e-3 {
            break;
        }
        if s < target_speed_mm_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocomotionError {
    #[error("invalid body configuration: {reason}")]
    InvalidBody { reason: String },
    #[error("segment {segment} has no mapped drive node {node:?}")]
    UnmappedSegment { segment: usize, node: String },
    #[error("time step {dt_s} s incompatible with drive grid {drive_dt_s} s")]
    InvalidTimeStep { dt_s: f64, drive_dt_s: f64 },
    #[error("period must be positive, got {period_s} s")]
    InvalidPeriod { period_s: f64 },
    #[error("segment {segment} length {length_mm:.3} mm out of range at {time_s:.3} s; lower dt or stiffness")]
    NumericalInstability {
        segment: usize,
        time_s: f64,
        length_mm: f64,
    },
    #[error("trace of {duration_s:.3} s too short, need {needed_s:.3} s")]
    TraceTooShort { duration_s: f64, needed_s: f64 },
    #[error("friction calibration failed: {reason}")]
    CalibrationFailed { reason: String },
    #[error("malformed gait CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
}
