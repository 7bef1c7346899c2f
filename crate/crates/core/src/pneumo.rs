//! Continuous-time pressure simulation of PLG netlists.
//!
//! Every output node is a first-order system: it fills toward
//! `output_ratio * supply` with `tau_fill` while an open valve path
//! connects it to the supply line, and vents toward atmosphere with
//! `tau_vent` while connected to the exhaust. Valves switch on their
//! control-node pressure through a Schmitt trigger (on at
//! `p_threshold_on`, off below `p_threshold_off`), which keeps the ring
//! oscillator free of chatter.
//!
//! Scaling both time constants by `k` rescales every trajectory in time by
//! exactly `k`, so calibration against a target period is a clean scalar
//! root-finding problem.

use thiserror::Error;

use crate::circuit::{LogicLevel, Netlist, Socket};
use crate::logic::{measure_period, LogicError, LogicTrace};
use crate::net::NetMap;

/// Parameters of the first-order node model.
#[derive(Debug, Clone, PartialEq)]
pub struct PneumoParams {
    pub tau_fill_s: f64,
    pub tau_vent_s: f64,
    pub p_threshold_on_bar: f64,
    pub p_threshold_off_bar: f64,
    pub output_ratio_default: f64,
    pub dt_s: f64,
    /// Steps a node may be path-connected to both supply and exhaust
    /// before the run aborts with contention.
    pub contention_grace_steps: usize,
}

impl Default for PneumoParams {
    fn default() -> Self {
        PneumoParams {
            tau_fill_s: 1.078,
            tau_vent_s: 0.267,
            p_threshold_on_bar: 1.0,
            p_threshold_off_bar: 0.8,
            output_ratio_default: 0.775,
            dt_s: 1e-3,
            contention_grace_steps: 5,
        }
    }
}

impl PneumoParams {
    pub fn validate(&self) -> Result<(), PneumoError> {
        let ok = self.tau_fill_s > 0.0
            && self.tau_vent_s > 0.0
            && self.dt_s > 0.0
            && self.p_threshold_off_bar > 0.0
            && self.p_threshold_off_bar <= self.p_threshold_on_bar
            && self.output_ratio_default > 0.0
            && self.output_ratio_default <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(PneumoError::InvalidParams)
        }
    }

    /// Copy with both time constants scaled by `k`.
    pub fn scaled(&self, k: f64) -> PneumoParams {
        PneumoParams {
            tau_fill_s: self.tau_fill_s * k,
            tau_vent_s: self.tau_vent_s * k,
            ..self.clone()
        }
    }
}

/// Uniform-grid pressure series for the recorded nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureTrace {
    pub nodes: Vec<String>,
    pub times_s: Vec<f64>,
    /// `pressures_bar[i][j]` is node `j` at `times_s[i]`.
    pub pressures_bar: Vec<Vec<f64>>,
}

impl PressureTrace {
    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }

    /// Pressure series of one node.
    pub fn series(&self, node: &str) -> Option<Vec<f64>> {
        let idx = self.node_index(node)?;
        Some(self.pressures_bar.iter().map(|row| row[idx]).collect())
    }

    pub fn dt_s(&self) -> f64 {
        if self.times_s.len() > 1 {
            self.times_s[1] - self.times_s[0]
        } else {
            0.0
        }
    }

    /// CSV rendering: `time_s,<node>_bar,...`, 6 decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s");
        for node in &self.nodes {
            out.push(',');
            out.push_str(node);
            out.push_str("_bar");
        }
        out.push('\n');
        for (time, row) in self.times_s.iter().zip(&self.pressures_bar) {
            out.push_str(&format!("{time:.6}"));
            for p in row {
                out.push_str(&format!(",{p:.6}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form produced by [`PressureTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<PressureTrace, PneumoError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| PneumoError::MalformedCsv {
            line: 1,
            reason: "empty file".into(),
        })?;
        let mut cols = header.split(',');
        if cols.next() != Some("time_s") {
            return Err(PneumoError::MalformedCsv {
                line: 1,
                reason: "first column must be time_s".into(),
            });
        }
        let nodes: Vec<String> = cols
            .map(|c| {
                c.strip_suffix("_bar").map(str::to_string).ok_or_else(|| {
                    PneumoError::MalformedCsv {
                        line: 1,
                        reason: format!("column {c:?} lacks _bar suffix"),
                    }
                })
            })
            .collect::<Result<_, _>>()?;
        let mut times = Vec::new();
        let mut pressures = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64, PneumoError> {
                s.and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| PneumoError::MalformedCsv {
                        line: i + 2,
                        reason: "not a number".into(),
                    })
            };
            times.push(parse(fields.next())?);
            let row: Result<Vec<f64>, _> = (0..nodes.len()).map(|_| parse(fields.next())).collect();
            pressures.push(row?);
        }
        Ok(PressureTrace {
            nodes,
            times_s: times,
            pressures_bar: pressures,
        })
    }
}

/// Time for a first-order fill from 0 bar to the switching threshold:
/// `tau_fill * ln(p_eff / (p_eff - p_on))`.
pub fn stage_delay(
    tau_fill_s: f64,
    p_supply_effective_bar: f64,
    p_threshold_on_bar: f64,
) -> Result<f64, PneumoError> {
    if !(p_threshold_on_bar > 0.0) || p_threshold_on_bar >= p_supply_effective_bar {
        return Err(PneumoError::ThresholdUnreachable {
            threshold_bar: p_threshold_on_bar,
            supply_bar: p_supply_effective_bar,
        });
    }
    Ok(tau_fill_s * (p_supply_effective_bar / (p_supply_effective_bar - p_threshold_on_bar)).ln())
}

enum NetKind {
    /// Pressure pinned by an attached supply.
    Supply(f64),
    /// Integrated state, driven by the listed modules' gates.
    Output,
    /// Undriven, unsupplied: atmosphere.
    Free,
}

/// Fixed-step pressure simulation.
///
/// Initial pressures are 0 bar everywhere with the supply present from
/// t = 0. The trace records every driven output net at each step.
pub fn simulate_pressure(
    netlist: &Netlist,
    params: &PneumoParams,
    duration_s: f64,
) -> Result<PressureTrace, PneumoError> {
    params.validate()?;
    if duration_s < params.dt_s {
        return Err(PneumoError::DurationTooShort {
            duration_s,
            dt_s: params.dt_s,
        });
    }
    // Free triggers are allowed here for the same reason as in the logic
    // engine: they sit at atmosphere.
    let mut bound = Vec::new();
    for module in &netlist.modules {
        for socket in module.gate.input_sockets() {
            bound.push(crate::circuit::Endpoint {
                module: module.id.clone(),
                socket,
            });
        }
    }
    let report = netlist.validate_with_inputs(&bound);
    if !report.is_valid() {
        return Err(PneumoError::InvalidNetlist {
            first_error: report.errors[0].to_string(),
        });
    }

    let nets = NetMap::build(netlist);
    let net_kinds: Vec<NetKind> = nets
        .nets()
        .iter()
        .map(|net| {
            if let Some(&supply) = net.supplies.first() {
                NetKind::Supply(netlist.supplies[supply].pressure_bar)
            } else if !net.drivers.is_empty() {
                NetKind::Output
            } else {
                NetKind::Free
            }
        })
        .collect();

    let max_supply = netlist
        .supplies
        .iter()
        .map(|s| s.pressure_bar)
        .fold(0.0f64, f64::max);

    // Valve table: (module, valve index in wiring) with resolved nets.
    struct Valve {
        kind: crate::circuit::ValveKind,
        control_net: usize,
        tube_in: Socket,
        tube_out: Socket,
        activated: bool,
    }
    struct Gate {
        out_net: usize,
        sp_net: usize,
        output_ratio: f64,
        valves: Vec<usize>,
        /// Input sockets resolved to nets, for generic pass-through paths.
        input_nets: Vec<(Socket, usize)>,
    }

    let mut valves: Vec<Valve> = Vec::new();
    let mut gates: Vec<Gate> = Vec::new();
    for (m, module) in netlist.modules.iter().enumerate() {
        let wiring = module.gate.wiring();
        let mut valve_ids = Vec::new();
        for valve in &wiring.valves {
            if valve.control == Socket::Exhaust {
                return Err(PneumoError::InvalidNetlist {
                    first_error: format!(
                        "module {}: valve controlled by the exhaust never switches",
                        module.id
                    ),
                });
            }
            valve_ids.push(valves.len());
            valves.push(Valve {
                kind: valve.kind,
                control_net: nets.net_of(m, valve.control),
                tube_in: valve.tube_in.canonical(),
                tube_out: valve.tube_out.canonical(),
                activated: false,
            });
        }
        let input_nets = module
            .gate
            .input_sockets()
            .into_iter()
            .map(|s| (s.canonical(), nets.net_of(m, s)))
            .collect();
        gates.push(Gate {
            out_net: nets.net_of(m, Socket::Out),
            sp_net: nets.net_of(m, Socket::SpIn),
            output_ratio: module.output_ratio,
            valves: valve_ids,
            input_nets,
        });
    }

    // Trace columns: one per driven output net, module order.
    let mut trace_nets: Vec<usize> = Vec::new();
    for gate in &gates {
        if !trace_nets.contains(&gate.out_net) {
            trace_nets.push(gate.out_net);
        }
    }
    let node_names: Vec<String> = trace_nets
        .iter()
        .map(|&n| nets.nets()[n].name.clone())
        .collect();

    let n_steps = (duration_s / params.dt_s).round() as usize;
    let mut pressures: Vec<f64> = net_kinds
        .iter()
        .map(|k| match k {
            NetKind::Supply(p) => *p,
            _ => 0.0,
        })
        .collect();
    let mut contention_steps = vec![0usize; nets.nets().len()];

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut rows = Vec::with_capacity(n_steps + 1);
    let record = |times: &mut Vec<f64>, rows: &mut Vec<Vec<f64>>, t: f64, p: &[f64]| {
        times.push(t);
        rows.push(trace_nets.iter().map(|&n| p[n]).collect());
    };
    record(&mut times, &mut rows, 0.0, &pressures);

    for step in 1..=n_steps {
        let t = step as f64 * params.dt_s;

        // Valve switching with hysteresis.
        for valve in valves.iter_mut() {
            let control = pressures[valve.control_net];
            if control >= params.p_threshold_on_bar {
                valve.activated = true;
            } else if control < params.p_threshold_off_bar {
                valve.activated = false;
            }
        }

        // Per output net: collect fill targets and vent paths across all
        // gates driving it.
        let mut fill_target: Vec<Option<f64>> = vec![None; nets.nets().len()];
        let mut vented = vec![false; nets.nets().len()];
        for gate in &gates {
            let open: Vec<bool> = gate
                .valves
                .iter()
                .map(|&v| {
                    let valve = &valves[v];
                    match valve.kind {
                        crate::circuit::ValveKind::NormallyOpen => !valve.activated,
                        crate::circuit::ValveKind::NormallyClosed => valve.activated,
                    }
                })
                .collect();
            // Flood-fill from OUT across open valves inside this gate.
            let mut reached = vec![Socket::Out];
            loop {
                let mut grew = false;
                for (i, &v) in gate.valves.iter().enumerate() {
                    if !open[i] {
                        continue;
                    }
                    let valve = &valves[v];
                    let a = valve.tube_in;
                    let b = valve.tube_out;
                    if reached.contains(&a) && !reached.contains(&b) {
                        reached.push(b);
                        grew = true;
                    }
                    if reached.contains(&b) && !reached.contains(&a) {
                        reached.push(a);
                        grew = true;
                    }
                }
                if !grew {
                    break;
                }
            }
            let mut target: Option<f64> = None;
            let mut vent = false;
            for socket in &reached {
                match socket {
                    Socket::Out => {}
                    Socket::Exhaust => vent = true,
                    Socket::SpIn => {
                        let p = gate.output_ratio * pressures[gate.sp_net];
                        target = Some(target.map_or(p, |t: f64| t.max(p)));
                    }
                    other => {
                        // A generic gate may pass an input net through to
                        // the output; it follows that pressure.
                        if let Some((_, net)) = gate.input_nets.iter().find(|(s, _)| s == other) {
                            let p = pressures[*net];
                            target = Some(target.map_or(p, |t: f64| t.max(p)));
                        }
                    }
                }
            }
            if let Some(p) = target {
                let slot = &mut fill_target[gate.out_net];
                *slot = Some(slot.map_or(p, |t: f64| t.max(p)));
            }
            if vent {
                vented[gate.out_net] = true;
            }
        }

        // Integrate output nets.
        for (net, kind) in net_kinds.iter().enumerate() {
            if !matches!(kind, NetKind::Output) {
                continue;
            }
            let p = pressures[net];
            let next = match (fill_target[net], vented[net]) {
                (Some(target), false) => {
                    contention_steps[net] = 0;
                    p + params.dt_s * (target - p) / params.tau_fill_s
                }
                (None, true) => {
                    contention_steps[net] = 0;
                    p - params.dt_s * p / params.tau_vent_s
                }
                (Some(_), true) => {
                    contention_steps[net] += 1;
                    if contention_steps[net] > params.contention_grace_steps {
                        return Err(PneumoError::ContentionDetected {
                            node: nets.nets()[net].name.clone(),
                            time_s: t,
                        });
                    }
                    p
                }
                (None, false) => {
                    contention_steps[net] = 0;
                    p
                }
            };
            pressures[net] = next.clamp(0.0, max_supply);
        }

        record(&mut times, &mut rows, t, &pressures);
    }

    Ok(PressureTrace {
        nodes: node_names,
        times_s: times,
        pressures_bar: rows,
    })
}

/// Schmitt-trigger digitization of a pressure trace.
///
/// A node reads HIGH once it reaches `p_threshold_on` and LOW again only
/// below `p_threshold_off`; rows are emitted for the initial state and for
/// every step where some node changes.
pub fn digitize(trace: &PressureTrace, params: &PneumoParams) -> LogicTrace {
    let n = trace.nodes.len();
    let mut levels: Vec<LogicLevel> = trace
        .pressures_bar
        .first()
        .map(|row| {
            row.iter()
                .map(|&p| {
                    if p >= params.p_threshold_on_bar {
                        LogicLevel::High
                    } else {
                        LogicLevel::Low
                    }
                })
                .collect()
        })
        .unwrap_or_else(|| vec![LogicLevel::Low; n]);

    let mut times = Vec::new();
    let mut rows = Vec::new();
    if !trace.times_s.is_empty() {
        times.push(trace.times_s[0]);
        rows.push(levels.clone());
    }
    for (i, row) in trace.pressures_bar.iter().enumerate().skip(1) {
        let mut changed = false;
        for (level, &p) in levels.iter_mut().zip(row) {
            let next = if p >= params.p_threshold_on_bar {
                LogicLevel::High
            } else if p < params.p_threshold_off_bar {
                LogicLevel::Low
            } else {
                *level
            };
            if next != *level {
                *level = next;
                changed = true;
            }
        }
        if changed {
            times.push(trace.times_s[i]);
            rows.push(levels.clone());
        }
    }
    LogicTrace {
        nodes: trace.nodes.clone(),
        times_s: times,
        levels: rows,
    }
}

/// Simulates the standard ring (1.6 mm bellows, 2.0 bar supply, 140 mm
/// tubes) and measures the digitized period at the inverter output.
pub fn ring_period(
    n_modules: usize,
    params: &PneumoParams,
    duration_s: f64,
    settle_s: f64,
) -> Result<f64, PneumoError> {
    let netlist = Netlist::ring_oscillator(
        n_modules,
        crate::actuator::BellowSpec::preset_t16(),
        2.0,
        140.0,
    )
    .map_err(|e| PneumoError::InvalidNetlist {
        first_error: e.to_string(),
    })?;
    let trace = simulate_pressure(&netlist, params, duration_s)?;
    let logic = digitize(&trace, params);
    Ok(measure_period(&logic, "M1.OUT", settle_s)?)
}

/// Scales `tau_fill` and `tau_vent` by a common multiplier until the
/// simulated `n_modules` ring oscillates at `target_period_s` within 1 %.
///
/// Scaling both time constants by `k` rescales every trajectory in time
/// by `k` exactly, so the scaled first measurement usually lands inside
/// tolerance immediately; scalar bisection around that guess mops up
/// step-quantization residue.
pub fn calibrate(
    target_period_s: f64,
    n_modules: usize,
    template: &PneumoParams,
) -> Result<PneumoParams, PneumoError> {
    if !(target_period_s > 0.0) || n_modules < 1 {
        return Err(PneumoError::InvalidParams);
    }
    template.validate()?;

    // Measure with settling and window proportional to the expected
    // period of the candidate.
    let measure = |params: &PneumoParams, expected_period: f64| -> Result<f64, PneumoError> {
        let duration = (expected_period * 10.0).max(20.0 * params.dt_s);
        ring_period(n_modules, params, duration, expected_period * 4.0)
    };

    // Analytic first estimate of the template's period from the stage
    // delays, refined by one measurement.
    let p_eff = template.output_ratio_default * 2.0;
    let rise =
        stage_delay(template.tau_fill_s, p_eff, template.p_threshold_on_bar).map_err(|_| {
            PneumoError::CalibrationFailed {
                reason: "switching threshold unreachable at the template parameters".to_string(),
            }
        })?;
    let fall = template.tau_vent_s * (p_eff / template.p_threshold_off_bar).ln();
    let estimate = n_modules as f64 * (rise + fall);
    let base = measure(template, estimate)
        .or_else(|_| measure(template, estimate * 4.0))
        .map_err(|_| PneumoError::CalibrationFailed {
            reason: "template parameters do not oscillate".to_string(),
        })?;

    let center = target_period_s / base;
    let period_at =
        |k: f64| -> Result<f64, PneumoError> { measure(&template.scaled(k), target_period_s) };

    let mut best = (center, (period_at(center)? - target_period_s).abs());
    if best.1 <= target_period_s * 1e-3 {
        return Ok(template.scaled(center));
    }

    let mut lo = center * 0.5;
    let mut hi = center * 2.0;
    let p_lo = period_at(lo)?;
    let p_hi = period_at(hi)?;
    if !(p_lo <= target_period_s && target_period_s <= p_hi) {
        return Err(PneumoError::CalibrationFailed {
            reason: format!(
                "bisection bracket [{lo:.4}, {hi:.4}] does not enclose the target period"
            ),
        });
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let period = period_at(mid)?;
        let err = (period - target_period_s).abs();
        if err < best.1 {
            best = (mid, err);
        }
        if err <= target_period_s * 1e-3 {
            break;
        }
        if period < target_period_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1 > target_period_s * 0.01 {
        return Err(PneumoError::CalibrationFailed {
            reason: format!(
                "best achieved period error {:.4} s exceeds 1 % of target",
                best.1
            ),
        });
    }
    Ok(template.scaled(best.0))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PneumoError {
    #[error("pneumatic parameters are out of range")]
    InvalidParams,
    #[error("netlist is not valid: {first_error}")]
    InvalidNetlist { first_error: String },
    #[error("duration {duration_s} s is shorter than one step ({dt_s} s)")]
    DurationTooShort { duration_s: f64, dt_s: f64 },
    #[error("node {node} connected to both supply and exhaust at {time_s:.3} s")]
    ContentionDetected { node: String, time_s: f64 },
    #[error("threshold {threshold_bar} bar is not reachable from supply {supply_bar} bar")]
    ThresholdUnreachable { threshold_bar: f64, supply_bar: f64 },
    #[error("calibration failed: {reason}")]
    CalibrationFailed { reason: String },
    #[error("malformed pressure CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error(transparent)]
    Logic(#[from] LogicError),
}
