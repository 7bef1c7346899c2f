//! Domain types for PLG modules, valves, sockets, and netlists, plus
//! programmatic builders and structural validation.
//!
//! A module is a soft-valve assembly with a supply pass-through on one side
//! (`SP_IN`/`SP_THRU`, a T-connection) and a split output on the other
//! (`OUT`/`OUT_NEXT`, one channel to the bellow, one along the trigger axis).
//! Modules are wired together by tubes into a [`Netlist`], the unit all
//! simulators in this crate consume.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use thiserror::Error;

use crate::actuator::BellowSpec;

/// Default per-module output pressure ratio. Module outputs saturate below
/// the supply line; 1.55 bar observed at 2.0 bar supply gives 0.775.
pub const DEFAULT_OUTPUT_RATIO: f64 = 0.775;

/// Default tube length in mm used by the builders.
pub const DEFAULT_TUBE_LENGTH_MM: f64 = 140.0;

/// Default tube inner diameter in mm (3 mm OD polyurethane tube).
pub const DEFAULT_TUBE_INNER_DIAMETER_MM: f64 = 2.0;

/// Digital pressure level at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogicLevel {
    Low,
    High,
    /// Contention (driven both high and low) or hold-state ambiguity
    /// (floating node). Never produced by well-formed combinational
    /// evaluation of the preconfigured gates.
    Indeterminate,
}

impl LogicLevel {
    /// Single-character encoding used in tables and CSV output.
    pub fn symbol(self) -> char {
        match self {
            LogicLevel::Low => 'L',
            LogicLevel::High => 'H',
            LogicLevel::Indeterminate => 'X',
        }
    }

    /// CSV encoding: `0`, `1` or `X`.
    pub fn csv_symbol(self) -> char {
        match self {
            LogicLevel::Low => '0',
            LogicLevel::High => '1',
            LogicLevel::Indeterminate => 'X',
        }
    }
}

impl fmt::Display for LogicLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Socket (port) of a PLG module.
///
/// `SP_IN`/`SP_THRU` are the two ends of the supply T-connection; `OUT` and
/// `OUT_NEXT` are the two channels of the split output. Each pair is one
/// internal channel, so either name addresses the same pneumatic node.
/// `EXHAUST` terminates at the module wall and cannot be tube-connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Socket {
    SpIn,
    SpThru,
    T,
    Out,
    OutNext,
    C1,
    C2,
    Exhaust,
}

impl Socket {
    pub const ALL: [Socket; 8] = [
        Socket::SpIn,
        Socket::SpThru,
        Socket::T,
        Socket::Out,
        Socket::OutNext,
        Socket::C1,
        Socket::C2,
        Socket::Exhaust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Socket::SpIn => "SP_IN",
            Socket::SpThru => "SP_THRU",
            Socket::T => "T",
            Socket::Out => "OUT",
            Socket::OutNext => "OUT_NEXT",
            Socket::C1 => "C1",
            Socket::C2 => "C2",
            Socket::Exhaust => "EXHAUST",
        }
    }

    /// Folds the paired socket names onto one representative per pneumatic
    /// node: `SP_THRU` -> `SP_IN`, `OUT_NEXT` -> `OUT`.
    pub fn canonical(self) -> Socket {
        match self {
            Socket::SpThru => Socket::SpIn,
            Socket::OutNext => Socket::Out,
            other => other,
        }
    }

    /// True for the supply-side pair.
    pub fn is_supply(self) -> bool {
        matches!(self, Socket::SpIn | Socket::SpThru)
    }
}

impl fmt::Display for Socket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Socket {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Socket::ALL
            .iter()
            .copied()
            .find(|sock| sock.name() == s)
            .ok_or(())
    }
}

/// Pinch-valve kind. A normally open valve conducts while its control
/// chamber is below the switching threshold; a normally closed valve
/// conducts while the control is at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValveKind {
    NormallyOpen,
    NormallyClosed,
}

impl ValveKind {
    pub fn name(self) -> &'static str {
        match self {
            ValveKind::NormallyOpen => "NO",
            ValveKind::NormallyClosed => "NC",
        }
    }

    /// Conducting state for a digital control level. An indeterminate
    /// control yields `None` (valve state unknown).
    pub fn conducts(self, control: LogicLevel) -> Option<bool> {
        match control {
            LogicLevel::Low => Some(self == ValveKind::NormallyOpen),
            LogicLevel::High => Some(self == ValveKind::NormallyClosed),
            LogicLevel::Indeterminate => None,
        }
    }
}

/// One valve inside a gate: a tube segment from `tube_in` to `tube_out`,
/// pinched or released by the pressure at `control`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValveSpec {
    pub kind: ValveKind,
    pub tube_in: Socket,
    pub tube_out: Socket,
    pub control: Socket,
}

impl ValveSpec {
    pub fn new(kind: ValveKind, tube_in: Socket, tube_out: Socket, control: Socket) -> ValveSpec {
        ValveSpec {
            kind,
            tube_in,
            tube_out,
            control,
        }
    }
}

/// Explicit two-valve wiring for a [`GateKind::Generic`] gate.
///
/// `inputs` lists the sockets treated as external trigger inputs, in the
/// column order used by truth tables.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericWiring {
    pub valves: Vec<ValveSpec>,
    pub inputs: Vec<Socket>,
}

impl GenericWiring {
    pub fn new(valves: Vec<ValveSpec>, inputs: Vec<Socket>) -> Result<GenericWiring, CircuitError> {
        for valve in &valves {
            if valve.tube_in == valve.tube_out {
                return Err(CircuitError::InvalidValve {
                    reason: format!(
                        "valve tube endpoints must differ, got {} -> {}",
                        valve.tube_in, valve.tube_out
                    ),
                });
            }
        }
        Ok(GenericWiring { valves, inputs })
    }

    /// The conventional PLG: the trigger passes through the normally open
    /// valve (control `C1`), the supply feeds through the normally closed
    /// valve (control `C2`). With both control inputs free this is a wired
    /// pass-gate whose exhaustive table includes contention rows.
    pub fn conventional() -> GenericWiring {
        GenericWiring {
            valves: vec![
                ValveSpec::new(ValveKind::NormallyOpen, Socket::T, Socket::Out, Socket::C1),
                ValveSpec::new(
                    ValveKind::NormallyClosed,
                    Socket::SpIn,
                    Socket::Out,
                    Socket::C2,
                ),
            ],
            inputs: vec![Socket::T, Socket::C1, Socket::C2],
        }
    }

    /// AND of `C2` and `T`: the normally closed valve passes `T` to the
    /// output only while `C2` holds it open; the normally open valve vents
    /// the output whenever `C2` is low, so the output never floats.
    pub fn and_gate() -> GenericWiring {
        GenericWiring {
            valves: vec![
                ValveSpec::new(
                    ValveKind::NormallyOpen,
                    Socket::Out,
                    Socket::Exhaust,
                    Socket::C2,
                ),
                ValveSpec::new(
                    ValveKind::NormallyClosed,
                    Socket::T,
                    Socket::Out,
                    Socket::C2,
                ),
            ],
            inputs: vec![Socket::C2, Socket::T],
        }
    }

    /// OR of `C2` and `T`: a high `C2` refreshes the output from the supply
    /// through the normally closed valve; otherwise the normally open valve
    /// passes `T` straight through.
    pub fn or_gate() -> GenericWiring {
        GenericWiring {
            valves: vec![
                ValveSpec::new(ValveKind::NormallyOpen, Socket::T, Socket::Out, Socket::C2),
                ValveSpec::new(
                    ValveKind::NormallyClosed,
                    Socket::SpIn,
                    Socket::Out,
                    Socket::C2,
                ),
            ],
            inputs: vec![Socket::C2, Socket::T],
        }
    }
}

/// Gate function of a module.
#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    /// OUT = NOT(T). Supply feeds the output through the normally open
    /// valve; the trigger vents it through the normally closed one.
    Inverter,
    /// OUT = T, refreshed from the supply line and delayed.
    Buffer,
    /// User-wired conventional PLG.
    Generic(GenericWiring),
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::Inverter => "inverter",
            GateKind::Buffer => "buffer",
            GateKind::Generic(_) => "generic",
        }
    }

    /// The two-valve wiring realising this gate. Inverter and buffer are
    /// preconfigured; their control inlets are merged internally and not
    /// exposed as sockets.
    pub fn wiring(&self) -> GenericWiring {
        match self {
            GateKind::Inverter => GenericWiring {
                valves: vec![
                    ValveSpec::new(
                        ValveKind::NormallyOpen,
                        Socket::SpIn,
                        Socket::Out,
                        Socket::T,
                    ),
                    ValveSpec::new(
                        ValveKind::NormallyClosed,
                        Socket::Out,
                        Socket::Exhaust,
                        Socket::T,
                    ),
                ],
                inputs: vec![Socket::T],
            },
            GateKind::Buffer => GenericWiring {
                valves: vec![
                    ValveSpec::new(
                        ValveKind::NormallyClosed,
                        Socket::SpIn,
                        Socket::Out,
                        Socket::T,
                    ),
                    ValveSpec::new(
                        ValveKind::NormallyOpen,
                        Socket::Out,
                        Socket::Exhaust,
                        Socket::T,
                    ),
                ],
                inputs: vec![Socket::T],
            },
            GateKind::Generic(wiring) => wiring.clone(),
        }
    }

    /// External input sockets of this gate, in truth-table column order.
    pub fn input_sockets(&self) -> Vec<Socket> {
        match self {
            GateKind::Inverter | GateKind::Buffer => vec![Socket::T],
            GateKind::Generic(wiring) => wiring.inputs.clone(),
        }
    }

    /// Sockets that may appear as tube or stopper endpoints on this module.
    pub fn exposed_sockets(&self) -> Vec<Socket> {
        let mut sockets = vec![Socket::SpIn, Socket::SpThru, Socket::Out, Socket::OutNext];
        for input in self.input_sockets() {
            if !sockets.contains(&input) {
                sockets.push(input);
            }
        }
        if let GateKind::Generic(wiring) = self {
            for valve in &wiring.valves {
                for sock in [valve.tube_in, valve.tube_out, valve.control] {
                    if sock != Socket::Exhaust && !sockets.contains(&sock) {
                        sockets.push(sock);
                    }
                }
            }
        }
        sockets.sort();
        sockets
    }
}

/// Module identifier, unique within a netlist.
///
/// Ordering is natural: digit runs compare numerically, so `M2 < M10`.
/// This is the order canonical serialization uses.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModuleId(String);

impl ModuleId {
    pub fn new(id: impl Into<String>) -> ModuleId {
        ModuleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModuleId {
    fn from(s: &str) -> ModuleId {
        ModuleId::new(s)
    }
}

impl Ord for ModuleId {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for ModuleId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Compares strings chunk-wise, with digit runs compared as integers.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    let mut ai = a.chars().peekable();
    let mut bi = b.chars().peekable();
    loop {
        match (ai.peek().copied(), bi.peek().copied()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(ca), Some(cb)) => {
                if ca.is_ascii_digit() && cb.is_ascii_digit() {
                    let mut na = 0u128;
                    while let Some(c) = ai.peek().copied().filter(char::is_ascii_digit) {
                        na = na
                            .saturating_mul(10)
                            .saturating_add((c as u8 - b'0') as u128);
                        ai.next();
                    }
                    let mut nb = 0u128;
                    while let Some(c) = bi.peek().copied().filter(char::is_ascii_digit) {
                        nb = nb
                            .saturating_mul(10)
                            .saturating_add((c as u8 - b'0') as u128);
                        bi.next();
                    }
                    match na.cmp(&nb) {
                        Ordering::Equal => {}
                        other => return other,
                    }
                } else {
                    match ca.cmp(&cb) {
                        Ordering::Equal => {
                            ai.next();
                            bi.next();
                        }
                        other => return other,
                    }
                }
            }
        }
    }
}

static NEXT_AUTO_ID: AtomicU64 = AtomicU64::new(1);

fn auto_id() -> ModuleId {
    let n = NEXT_AUTO_ID.fetch_add(1, AtomicOrdering::Relaxed);
    ModuleId::new(format!("M{n}"))
}

/// One PLG module: a gate, optionally an integrated bellow actuator, and the
/// static pressure-divider ratio its output saturates at.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleSpec {
    pub id: ModuleId,
    pub gate: GateKind,
    pub bellow: Option<BellowSpec>,
    pub output_ratio: f64,
}

impl ModuleSpec {
    fn with_gate(gate: GateKind, bellow: Option<BellowSpec>) -> ModuleSpec {
        ModuleSpec {
            id: auto_id(),
            gate,
            bellow,
            output_ratio: DEFAULT_OUTPUT_RATIO,
        }
    }

    /// Builds an inverter module; OUT = NOT(T).
    pub fn inverter(bellow: Option<BellowSpec>) -> ModuleSpec {
        ModuleSpec::with_gate(GateKind::Inverter, bellow)
    }

    /// Builds a buffer module; OUT = T, refreshed and delayed.
    pub fn buffer(bellow: Option<BellowSpec>) -> ModuleSpec {
        ModuleSpec::with_gate(GateKind::Buffer, bellow)
    }

    /// Builds a generic (conventional, user-wired) module.
    pub fn generic(wiring: GenericWiring, bellow: Option<BellowSpec>) -> ModuleSpec {
        ModuleSpec::with_gate(GateKind::Generic(wiring), bellow)
    }

    pub fn with_id(mut self, id: impl Into<ModuleId>) -> ModuleSpec {
        self.id = id.into();
        self
    }

    pub fn with_output_ratio(mut self, ratio: f64) -> ModuleSpec {
        self.output_ratio = ratio;
        self
    }
}

/// A tube endpoint: a socket on a named module.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub module: ModuleId,
    pub socket: Socket,
}

impl Endpoint {
    pub fn new(module: impl Into<ModuleId>, socket: Socket) -> Endpoint {
        Endpoint {
            module: module.into(),
            socket,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.module, self.socket)
    }
}

/// Polyurethane tube connecting two module sockets.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeSpec {
    pub from: Endpoint,
    pub to: Endpoint,
    pub length_mm: f64,
    pub inner_diameter_mm: f64,
}

/// Constant-pressure source attached to a module's supply inlet (`SP_IN`).
#[derive(Debug, Clone, PartialEq)]
pub struct SupplySpec {
    pub module: ModuleId,
    pub pressure_bar: f64,
}

/// Cap blocking airflow at a socket (ends the supply daisy-chain).
#[derive(Debug, Clone, PartialEq)]
pub struct StopperSpec {
    pub module: ModuleId,
    pub socket: Socket,
}

/// A circuit of PLG modules: the unit every simulator consumes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Netlist {
    pub modules: Vec<ModuleSpec>,
    pub tubes: Vec<TubeSpec>,
    pub supplies: Vec<SupplySpec>,
    pub stoppers: Vec<StopperSpec>,
}

impl Netlist {
    /// Builds the ring-oscillator circuit: one inverter followed by
    /// `n_modules - 1` buffers, supply daisy-chained along `SP_THRU`,
    /// a stopper capping the last module, and the last output looped back
    /// to the inverter's trigger.
    ///
    /// `ring_oscillator(4, BellowSpec::preset_t16(), 2.0, 140.0)` is the
    /// desk-scale robot circuit (M1 inverter, M2-M4 buffers).
    pub fn ring_oscillator(
        n_modules: usize,
        bellow: BellowSpec,
        supply_pressure_bar: f64,
        tube_length_mm: f64,
    ) -> Result<Netlist, CircuitError> {
        if n_modules < 1 {
            return Err(CircuitError::InvalidArgument {
                reason: "ring oscillator needs at least one module".to_string(),
            });
        }
        let mut modules = Vec::with_capacity(n_modules);
        for i in 1..=n_modules {
            let id = format!("M{i}");
            let module = if i == 1 {
                ModuleSpec::inverter(Some(bellow.clone()))
            } else {
                ModuleSpec::buffer(Some(bellow.clone()))
            };
            modules.push(module.with_id(id.as_str()));
        }

        let tube = |from: &ModuleSpec, fs: Socket, to: &ModuleSpec, ts: Socket| TubeSpec {
            from: Endpoint {
                module: from.id.clone(),
                socket: fs,
            },
            to: Endpoint {
                module: to.id.clone(),
                socket: ts,
            },
            length_mm: tube_length_mm,
            inner_diameter_mm: DEFAULT_TUBE_INNER_DIAMETER_MM,
        };

        let mut tubes = Vec::new();
        for i in 0..n_modules {
            let next = (i + 1) % n_modules;
            if next != 0 {
                tubes.push(tube(
                    &modules[i],
                    Socket::SpThru,
                    &modules[next],
                    Socket::SpIn,
                ));
            }
            tubes.push(tube(
                &modules[i],
                Socket::OutNext,
                &modules[next],
                Socket::T,
            ));
        }

        Ok(Netlist {
            supplies: vec![SupplySpec {
                module: modules[0].id.clone(),
                pressure_bar: supply_pressure_bar,
            }],
            stoppers: vec![StopperSpec {
                module: modules[n_modules - 1].id.clone(),
                socket: Socket::SpThru,
            }],
            modules,
            tubes,
        })
    }

    pub fn module(&self, id: &ModuleId) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| &m.id == id)
    }

    /// Sorts modules, tubes, supplies and stoppers into canonical order
    /// (module id order, then socket order). Serialization applies this
    /// ordering; builders already produce it.
    pub fn canonicalize(&mut self) {
        self.modules.sort_by(|a, b| a.id.cmp(&b.id));
        self.tubes
            .sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
        self.supplies.sort_by(|a, b| {
            a.module
                .cmp(&b.module)
                .then(a.pressure_bar.total_cmp(&b.pressure_bar))
        });
        self.stoppers
            .sort_by(|a, b| (&a.module, a.socket).cmp(&(&b.module, b.socket)));
    }

    /// Structural validation. Errors are empty exactly when the netlist is
    /// simulatable with no external inputs; see [`Netlist::validate_with_inputs`]
    /// for circuits driven through unconnected trigger sockets.
    pub fn validate(&self) -> ValidationReport {
        self.validate_with_inputs(&[])
    }

    /// Validation that treats the given endpoints as externally driven, so
    /// combinational circuits with free trigger inputs can be checked before
    /// evaluation.
    pub fn validate_with_inputs(&self, external: &[Endpoint]) -> ValidationReport {
        let mut report = ValidationReport::default();

        let mut seen = std::collections::BTreeSet::new();
        for module in &self.modules {
            if !seen.insert(module.id.clone()) {
                report.error(
                    DiagCode::DuplicateId,
                    format!("module id {} declared more than once", module.id),
                    module.id.to_string(),
                );
            }
            if !(module.output_ratio > 0.0 && module.output_ratio <= 1.0) {
                report.error(
                    DiagCode::InvalidParameter,
                    format!(
                        "output ratio must lie in (0, 1], got {}",
                        module.output_ratio
                    ),
                    module.id.to_string(),
                );
            }
        }

        let endpoint_ok = |ep: &Endpoint| -> bool {
            self.module(&ep.module)
                .map(|m| m.gate.exposed_sockets().contains(&ep.socket))
                .unwrap_or(false)
        };

        for tube in &self.tubes {
            for ep in [&tube.from, &tube.to] {
                if !endpoint_ok(ep) {
                    report.error(
                        DiagCode::UnknownEndpoint,
                        format!("tube endpoint {ep} does not resolve to an exposed socket"),
                        ep.to_string(),
                    );
                }
            }
            if !(tube.length_mm > 0.0) || !(tube.inner_diameter_mm > 0.0) {
                report.error(
                    DiagCode::InvalidParameter,
                    format!(
                        "tube {} -> {} must have positive length and inner diameter",
                        tube.from, tube.to
                    ),
                    tube.from.to_string(),
                );
            }
        }

        for supply in &self.supplies {
            if self.module(&supply.module).is_none() {
                report.error(
                    DiagCode::UnknownEndpoint,
                    format!("supply references unknown module {}", supply.module),
                    supply.module.to_string(),
                );
            }
        }

        for stopper in &self.stoppers {
            let ep = Endpoint {
                module: stopper.module.clone(),
                socket: stopper.socket,
            };
            if !endpoint_ok(&ep) {
                report.error(
                    DiagCode::UnknownEndpoint,
                    format!("stopper references unknown socket {ep}"),
                    ep.to_string(),
                );
            }
            for tube in &self.tubes {
                if tube.from == ep || tube.to == ep {
                    report.error(
                        DiagCode::StopperedConnected,
                        format!("socket {ep} carries a stopper but also appears in a tube"),
                        ep.to_string(),
                    );
                }
            }
        }

        // Net-level rules need resolvable endpoints; skip them if the
        // structure is already broken.
        if report
            .errors
            .iter()
            .any(|d| matches!(d.code, DiagCode::UnknownEndpoint | DiagCode::DuplicateId))
        {
            return report;
        }

        let nets = crate::net::NetMap::build(self);

        for net in nets.nets() {
            let mut pressures: Vec<f64> = net
                .supplies
                .iter()
                .map(|s| self.supplies[*s].pressure_bar)
                .collect();
            pressures.sort_by(f64::total_cmp);
            pressures.dedup();
            if pressures.len() > 1 {
                report.error(
                    DiagCode::SupplyConflict,
                    format!(
                        "node {} is driven by supplies at {} different pressures",
                        net.name,
                        pressures.len()
                    ),
                    net.name.clone(),
                );
            } else if net.supplies.len() > 1 {
                report.warning(
                    DiagCode::DuplicateSupply,
                    format!(
                        "node {} is driven by more than one identical supply",
                        net.name
                    ),
                    net.name.clone(),
                );
            }
        }

        for (idx, module) in self.modules.iter().enumerate() {
            let supply_net = nets.net_of(idx, Socket::SpIn);
            if nets.nets()[supply_net].supplies.is_empty() {
                // Simulatable, just inert: the gate can never drive HIGH.
                report.warning(
                    DiagCode::UnsuppliedGate,
                    format!("module {} has no path to a pressure supply", module.id),
                    module.id.to_string(),
                );
            }
            for input in module.gate.input_sockets() {
                let ep = Endpoint {
                    module: module.id.clone(),
                    socket: input,
                };
                let net = &nets.nets()[nets.net_of(idx, input)];
                let driven =
                    !net.drivers.is_empty() || !net.supplies.is_empty() || external.contains(&ep);
                if !driven {
                    if input == Socket::T {
                        report.error(
                            DiagCode::DanglingTrigger,
                            format!("trigger input {ep} is not driven by any output or supply"),
                            ep.to_string(),
                        );
                    } else {
                        report.warning(
                            DiagCode::UnconnectedInput,
                            format!("input {ep} is unconnected and reads LOW"),
                            ep.to_string(),
                        );
                    }
                }
            }
        }

        report
    }
}

/// Diagnostic codes emitted by [`Netlist::validate`] and the DSL linter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagCode {
    DuplicateId,
    UnknownEndpoint,
    StopperedConnected,
    SupplyConflict,
    UnsuppliedGate,
    DanglingTrigger,
    InvalidParameter,
    DuplicateSupply,
    UnconnectedInput,
    TubeTooShort,
}

impl DiagCode {
    pub fn name(self) -> &'static str {
        match self {
            DiagCode::DuplicateId => "DUPLICATE_ID",
            DiagCode::UnknownEndpoint => "UNKNOWN_ENDPOINT",
            DiagCode::StopperedConnected => "STOPPERED_CONNECTED",
            DiagCode::SupplyConflict => "SUPPLY_CONFLICT",
            DiagCode::UnsuppliedGate => "UNSUPPLIED_GATE",
            DiagCode::DanglingTrigger => "DANGLING_TRIGGER",
            DiagCode::InvalidParameter => "INVALID_PARAMETER",
            DiagCode::DuplicateSupply => "DUPLICATE_SUPPLY",
            DiagCode::UnconnectedInput => "UNCONNECTED_INPUT",
            DiagCode::TubeTooShort => "TUBE_TOO_SHORT",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One validation or lint finding.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub message: String,
    pub location: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.location, self.message)
    }
}

/// Result of structural validation; empty `errors` means simulatable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, code: DiagCode, message: String, location: String) {
        self.errors.push(Diagnostic {
            code,
            message,
            location,
        });
    }

    fn warning(&mut self, code: DiagCode, message: String, location: String) {
        self.warnings.push(Diagnostic {
            code,
            message,
            location,
        });
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("invalid argument: {reason}")]
    InvalidArgument { reason: String },
    #[error("invalid valve: {reason}")]
    InvalidValve { reason: String },
}
