//! Digital abstraction of PLG networks: truth tables, combinational
//! evaluation, feedback-loop detection and delay-based event simulation.
//!
//! Gate outputs follow path semantics: OUT is HIGH when an open-valve path
//! connects it to a high source (the supply or a high input) and no open
//! path vents it; LOW when it is vented (to the exhaust or a low input,
//! which sits at atmosphere) and reaches no high source; INDETERMINATE on
//! contention or when the output floats.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::circuit::{Endpoint, GateKind, GenericWiring, LogicLevel, Netlist, Socket};
use crate::net::NetMap;

/// Exhaustive input/output table of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub inputs: Vec<Socket>,
    /// All `2^k` rows, inputs counting up with LOW before HIGH.
    pub rows: Vec<(Vec<LogicLevel>, LogicLevel)>,
}

impl TruthTable {
    /// Renders the table with one column per input plus `OUT`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for input in &self.inputs {
            out.push_str(&format!("{:<9}", input.name()));
        }
        out.push_str("OUT\n");
        for (levels, result) in &self.rows {
            for level in levels {
                out.push_str(&format!("{:<9}", level.symbol()));
            }
            out.push(result.symbol());
            out.push('\n');
        }
        out
    }

    pub fn output_for(&self, inputs: &[LogicLevel]) -> Option<LogicLevel> {
        self.rows
            .iter()
            .find(|(levels, _)| levels == inputs)
            .map(|(_, out)| *out)
    }
}

/// Evaluates a gate's output for one assignment of input levels.
///
/// Controls at an indeterminate level leave the valve state unknown; both
/// states are explored and disagreement collapses to INDETERMINATE.
pub fn eval_gate(wiring: &GenericWiring, inputs: &BTreeMap<Socket, LogicLevel>) -> LogicLevel {
    let unknown: Vec<usize> = wiring
        .valves
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            let level = socket_level(v.control, inputs);
            v.kind.conducts(level).is_none().then_some(i)
        })
        .collect();

    let mut outcome: Option<LogicLevel> = None;
    for mask in 0..(1usize << unknown.len()) {
        let open: Vec<bool> = wiring
            .valves
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if let Some(pos) = unknown.iter().position(|&u| u == i) {
                    mask & (1 << pos) != 0
                } else {
                    let level = socket_level(v.control, inputs);
                    v.kind.conducts(level).unwrap()
                }
            })
            .collect();
        let level = eval_paths(wiring, inputs, &open);
        outcome = Some(match outcome {
            None => level,
            Some(prev) if prev == level => level,
            Some(_) => return LogicLevel::Indeterminate,
        });
    }
    outcome.unwrap_or(LogicLevel::Indeterminate)
}

/// Level seen at a socket inside a gate: supply sockets are high, the
/// exhaust is low, declared inputs carry their assigned level, anything
/// else is unbound (atmospheric, low).
fn socket_level(socket: Socket, inputs: &BTreeMap<Socket, LogicLevel>) -> LogicLevel {
    if let Some(level) = inputs
        .get(&socket.canonical())
        .or_else(|| inputs.get(&socket))
    {
        return *level;
    }
    if socket.is_supply() {
        return LogicLevel::High;
    }
    LogicLevel::Low
}

/// Flood-fills from OUT across open valves and classifies what it reaches.
fn eval_paths(
    wiring: &GenericWiring,
    inputs: &BTreeMap<Socket, LogicLevel>,
    open: &[bool],
) -> LogicLevel {
    let mut reached = BTreeSet::from([Socket::Out]);
    loop {
        let mut grew = false;
        for (valve, is_open) in wiring.valves.iter().zip(open) {
            if !is_open {
                continue;
            }
            let a = valve.tube_in.canonical();
            let b = valve.tube_out.canonical();
            if reached.contains(&a) && reached.insert(b) {
                grew = true;
            }
            if reached.contains(&b) && reached.insert(a) {
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }

    let mut high_source = false;
    let mut low_sink = false;
    for socket in &reached {
        if *socket == Socket::Out {
            continue;
        }
        if *socket == Socket::Exhaust {
            low_sink = true;
            continue;
        }
        match socket_level(*socket, inputs) {
            LogicLevel::High => high_source = true,
            LogicLevel::Low => {
                // Only nodes that are vents count as sinks: declared inputs
                // and the supply pair. A capped internal socket holds air.
                if wiring.inputs.contains(socket) || socket.is_supply() {
                    low_sink = true;
                }
            }
            LogicLevel::Indeterminate => return LogicLevel::Indeterminate,
        }
    }
    match (high_source, low_sink) {
        (true, false) => LogicLevel::High,
        (false, true) => LogicLevel::Low,
        _ => LogicLevel::Indeterminate,
    }
}

/// Exhaustive truth table of a gate via path semantics.
pub fn truth_table(gate: &GateKind) -> Result<TruthTable, LogicError> {
    let wiring = gate.wiring();
    if let GateKind::Generic(w) = gate {
        check_wiring_complete(w)?;
    }
    let inputs = wiring.inputs.clone();
    let k = inputs.len();
    let mut rows = Vec::with_capacity(1 << k);
    for combo in 0..(1u32 << k) {
        let levels: Vec<LogicLevel> = (0..k)
            .map(|i| {
                if combo & (1 << (k - 1 - i)) != 0 {
                    LogicLevel::High
                } else {
                    LogicLevel::Low
                }
            })
            .collect();
        let assignment: BTreeMap<Socket, LogicLevel> =
            inputs.iter().copied().zip(levels.iter().copied()).collect();
        rows.push((levels, eval_gate(&wiring, &assignment)));
    }
    Ok(TruthTable { inputs, rows })
}

fn check_wiring_complete(wiring: &GenericWiring) -> Result<(), LogicError> {
    if wiring.valves.len() != 2 {
        return Err(LogicError::IncompleteWiring {
            reason: format!(
                "generic gate needs exactly 2 valves, found {}",
                wiring.valves.len()
            ),
        });
    }
    let no = wiring
        .valves
        .iter()
        .filter(|v| v.kind == crate::circuit::ValveKind::NormallyOpen)
        .count();
    if no != 1 {
        return Err(LogicError::IncompleteWiring {
            reason: "generic gate needs one normally open and one normally closed valve"
                .to_string(),
        });
    }
    if wiring.inputs.is_empty() {
        return Err(LogicError::IncompleteWiring {
            reason: "generic gate declares no input sockets".to_string(),
        });
    }
    for valve in &wiring.valves {
        let control = valve.control.canonical();
        let bound = wiring.inputs.contains(&control)
            || wiring.inputs.contains(&valve.control)
            || control.is_supply()
            || control == Socket::Exhaust;
        if !bound {
            return Err(LogicError::IncompleteWiring {
                reason: format!(
                    "valve control {} is bound to neither an input, the supply, nor the exhaust",
                    valve.control
                ),
            });
        }
    }
    Ok(())
}

/// Per-module propagation delays of the event simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayModel {
    pub rise_s: f64,
    pub fall_s: f64,
}

impl DelayModel {
    pub fn new(rise_s: f64, fall_s: f64) -> Result<DelayModel, LogicError> {
        if !(rise_s > 0.0 && fall_s > 0.0) {
            return Err(LogicError::InvalidDelay { rise_s, fall_s });
        }
        Ok(DelayModel { rise_s, fall_s })
    }

    /// Symmetric delays that give an `n`-module single-inversion ring the
    /// requested period: period = 2 * n * delay.
    pub fn for_ring_period(period_s: f64, n_modules: usize) -> Result<DelayModel, LogicError> {
        let d = period_s / (2.0 * n_modules as f64);
        DelayModel::new(d, d)
    }

    fn delay_to(&self, target: LogicLevel) -> f64 {
        match target {
            LogicLevel::High => self.rise_s,
            LogicLevel::Low => self.fall_s,
            LogicLevel::Indeterminate => self.rise_s.max(self.fall_s),
        }
    }
}

/// Event-time series of digital levels, piecewise-constant between rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicTrace {
    pub nodes: Vec<String>,
    pub times_s: Vec<f64>,
    /// `levels[i][j]` is node `j` at time `times_s[i]`.
    pub levels: Vec<Vec<LogicLevel>>,
}

impl LogicTrace {
    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }

    /// Level series of one node.
    pub fn series(&self, node: &str) -> Option<Vec<LogicLevel>> {
        let idx = self.node_index(node)?;
        Some(self.levels.iter().map(|row| row[idx]).collect())
    }

    /// Times of LOW -> HIGH transitions at a node.
    pub fn rising_edges(&self, node: &str) -> Vec<f64> {
        let Some(idx) = self.node_index(node) else {
            return Vec::new();
        };
        let mut edges = Vec::new();
        for i in 1..self.times_s.len() {
            if self.levels[i - 1][idx] == LogicLevel::Low && self.levels[i][idx] == LogicLevel::High
            {
                edges.push(self.times_s[i]);
            }
        }
        edges
    }

    /// CSV rendering: `time_s,<node>,...` with levels encoded 0/1/X.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s");
        for node in &self.nodes {
            out.push(',');
            out.push_str(node);
        }
        out.push('\n');
        for (time, row) in self.times_s.iter().zip(&self.levels) {
            out.push_str(&format!("{time:.6}"));
            for level in row {
                out.push(',');
                out.push(level.csv_symbol());
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form produced by [`LogicTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<LogicTrace, LogicError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| LogicError::MalformedCsv {
            line: 1,
            reason: "empty file".to_string(),
        })?;
        let mut cols = header.split(',');
        if cols.next() != Some("time_s") {
            return Err(LogicError::MalformedCsv {
                line: 1,
                reason: "first column must be time_s".to_string(),
            });
        }
        let nodes: Vec<String> = cols.map(str::to_string).collect();
        let mut times = Vec::new();
        let mut levels = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let time = fields
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| LogicError::MalformedCsv {
                    line: i + 2,
                    reason: "bad time field".to_string(),
                })?;
            let row: Result<Vec<LogicLevel>, LogicError> = (0..nodes.len())
                .map(|_| match fields.next() {
                    Some("0") => Ok(LogicLevel::Low),
                    Some("1") => Ok(LogicLevel::High),
                    Some("X") => Ok(LogicLevel::Indeterminate),
                    other => Err(LogicError::MalformedCsv {
                        line: i + 2,
                        reason: format!("bad level field {other:?}"),
                    }),
                })
                .collect();
            times.push(time);
            levels.push(row?);
        }
        Ok(LogicTrace {
            nodes,
            times_s: times,
            levels,
        })
    }
}

/// Resolved digital levels for every socket node of a netlist.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLevels {
    by_endpoint: BTreeMap<Endpoint, LogicLevel>,
}

impl NodeLevels {
    pub fn level(&self, endpoint: &Endpoint) -> Option<LogicLevel> {
        self.by_endpoint.get(endpoint).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Endpoint, LogicLevel)> {
        self.by_endpoint.iter().map(|(e, l)| (e, *l))
    }
}

struct LogicNetwork<'a> {
    netlist: &'a Netlist,
    nets: NetMap,
    /// Per module: input sockets and their net indices.
    module_inputs: Vec<Vec<(Socket, usize)>>,
    /// Per module: net its OUT drives.
    module_out_net: Vec<usize>,
    /// Net levels that are fixed (supplies high, unbound nets low or bound
    /// to an external input level).
    fixed: Vec<Option<LogicLevel>>,
}

impl<'a> LogicNetwork<'a> {
    fn build(
        netlist: &'a Netlist,
        external: &BTreeMap<Endpoint, LogicLevel>,
    ) -> Result<LogicNetwork<'a>, LogicError> {
        // Free trigger inputs are legal here: they sit at atmosphere and
        // read LOW (or the caller's binding). Validation therefore treats
        // every input socket as externally driven.
        let mut bound: Vec<Endpoint> = external.keys().cloned().collect();
        for module in &netlist.modules {
            for socket in module.gate.input_sockets() {
                bound.push(Endpoint {
                    module: module.id.clone(),
                    socket,
                });
            }
        }
        let report = netlist.validate_with_inputs(&bound);
        if !report.is_valid() {
            return Err(LogicError::InvalidNetlist {
                first_error: report.errors[0].to_string(),
            });
        }
        let nets = NetMap::build(netlist);
        let mut fixed: Vec<Option<LogicLevel>> = nets
            .nets()
            .iter()
            .map(|net| {
                if !net.supplies.is_empty() {
                    Some(LogicLevel::High)
                } else if net.drivers.is_empty() {
                    Some(LogicLevel::Low)
                } else {
                    None
                }
            })
            .collect();
        for (ep, level) in external {
            let (module, socket) = nets.resolve(ep).ok_or_else(|| LogicError::UnknownNode {
                node: ep.to_string(),
            })?;
            let net = nets.net_of(module, socket);
            if nets.nets()[net].drivers.is_empty() && nets.nets()[net].supplies.is_empty() {
                fixed[net] = Some(*level);
            }
        }
        let module_inputs = netlist
            .modules
            .iter()
            .enumerate()
            .map(|(i, m)| {
                m.gate
                    .input_sockets()
                    .into_iter()
                    .map(|s| (s, nets.net_of(i, s)))
                    .collect()
            })
            .collect();
        let module_out_net = (0..netlist.modules.len())
            .map(|i| nets.net_of(i, Socket::Out))
            .collect();
        Ok(LogicNetwork {
            netlist,
            nets,
            module_inputs,
            module_out_net,
            fixed,
        })
    }

    /// Net level given current module output levels.
    fn net_level(&self, net: usize, outputs: &[LogicLevel]) -> LogicLevel {
        if let Some(level) = self.fixed[net] {
            return level;
        }
        let mut level: Option<LogicLevel> = None;
        for driver in &self.nets.nets()[net].drivers {
            let out = outputs[*driver];
            level = Some(match level {
                None => out,
                Some(prev) if prev == out => out,
                Some(_) => LogicLevel::Indeterminate,
            });
        }
        level.unwrap_or(LogicLevel::Low)
    }

    /// Gate output a module would settle to given current net levels.
    fn module_target(&self, module: usize, outputs: &[LogicLevel]) -> LogicLevel {
        let assignment: BTreeMap<Socket, LogicLevel> = self.module_inputs[module]
            .iter()
            .map(|(socket, net)| (*socket, self.net_level(*net, outputs)))
            .collect();
        eval_gate(&self.netlist.modules[module].gate.wiring(), &assignment)
    }

    /// module -> modules whose inputs read its output net.
    fn dependents(&self) -> Vec<Vec<usize>> {
        let mut deps = vec![Vec::new(); self.netlist.modules.len()];
        for (consumer, inputs) in self.module_inputs.iter().enumerate() {
            for (_, net) in inputs {
                for driver in &self.nets.nets()[*net].drivers {
                    if !deps[*driver].contains(&consumer) {
                        deps[*driver].push(consumer);
                    }
                }
            }
        }
        deps
    }

    /// Trigger-dependency edges: driver module -> consumer module.
    fn trigger_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (driver, consumers) in self.dependents().into_iter().enumerate() {
            for consumer in consumers {
                edges.push((driver, consumer));
            }
        }
        edges
    }

    /// Nets recorded in traces: every driven output net, then undriven
    /// external-input nets, each under its display name.
    fn trace_nets(&self) -> Vec<(usize, String)> {
        let mut nets = Vec::new();
        for module in 0..self.netlist.modules.len() {
            let net = self.module_out_net[module];
            let name = format!("{}.OUT", self.netlist.modules[module].id);
            if !nets.iter().any(|(n, _)| *n == net) {
                nets.push((net, name));
            }
        }
        for (module, inputs) in self.module_inputs.iter().enumerate() {
            for (socket, net) in inputs {
                let info = &self.nets.nets()[*net];
                if info.drivers.is_empty() && info.supplies.is_empty() {
                    let name = format!("{}.{}", self.netlist.modules[module].id, socket);
                    if !nets.iter().any(|(n, _)| n == net) {
                        nets.push((*net, name));
                    }
                }
            }
        }
        nets
    }
}

/// Steady-state Boolean evaluation of an acyclic netlist.
///
/// `inputs` binds levels to externally driven sockets (typically free
/// trigger inlets). Fails with [`LogicError::CombinationalLoop`] when the
/// trigger-dependency graph has a cycle.
pub fn eval_combinational(
    netlist: &Netlist,
    inputs: &BTreeMap<Endpoint, LogicLevel>,
) -> Result<NodeLevels, LogicError> {
    let network = LogicNetwork::build(netlist, inputs)?;
    let n = netlist.modules.len();

    // Topological order over trigger dependencies.
    let mut indegree = vec![0usize; n];
    let edges = network.trigger_edges();
    for (_, consumer) in &edges {
        indegree[*consumer] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    ready.sort_unstable();
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::from(ready);
    while let Some(module) = queue.pop_front() {
        order.push(module);
        for (driver, consumer) in &edges {
            if *driver == module {
                indegree[*consumer] -= 1;
                if indegree[*consumer] == 0 {
                    queue.push_back(*consumer);
                }
            }
        }
    }
    if order.len() != n {
        let loops = find_feedback_loops(netlist)?;
        let cycle = loops
            .first()
            .map(|c| {
                c.iter()
                    .map(|id| id.as_str())
                    .collect::<Vec<_>>()
                    .join(" -> ")
            })
            .unwrap_or_default();
        return Err(LogicError::CombinationalLoop { cycle });
    }

    let mut outputs = vec![LogicLevel::Low; n];
    for module in order {
        outputs[module] = network.module_target(module, &outputs);
    }

    let mut by_endpoint = BTreeMap::new();
    for (module, spec) in netlist.modules.iter().enumerate() {
        for socket in spec.gate.exposed_sockets() {
            let net = network.nets.net_of(module, socket);
            let level = network.net_level(net, &outputs);
            by_endpoint.insert(
                Endpoint {
                    module: spec.id.clone(),
                    socket,
                },
                level,
            );
        }
    }
    Ok(NodeLevels { by_endpoint })
}

/// All elementary cycles of the trigger-dependency graph, each rotated to
/// start at its smallest module id, sorted.
pub fn find_feedback_loops(
    netlist: &Netlist,
) -> Result<Vec<Vec<crate::circuit::ModuleId>>, LogicError> {
    let network = LogicNetwork::build(netlist, &BTreeMap::new())?;
    let n = netlist.modules.len();
    let mut adjacency = vec![Vec::new(); n];
    for (driver, consumer) in network.trigger_edges() {
        adjacency[driver].push(consumer);
    }
    for targets in adjacency.iter_mut() {
        targets.sort_unstable();
    }

    // Module order for canonical cycle roots follows id order.
    let mut id_order: Vec<usize> = (0..n).collect();
    id_order.sort_by(|&a, &b| netlist.modules[a].id.cmp(&netlist.modules[b].id));
    let mut rank = vec![0usize; n];
    for (r, &module) in id_order.iter().enumerate() {
        rank[module] = r;
    }

    // Enumerate elementary cycles whose minimum-rank vertex is the root.
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    for &root in &id_order {
        let mut stack = vec![root];
        let mut on_stack = vec![false; n];
        on_stack[root] = true;
        let mut iters: Vec<usize> = vec![0];
        while let Some(&current) = stack.last() {
            let next_index = *iters.last().unwrap();
            if next_index < adjacency[current].len() {
                *iters.last_mut().unwrap() += 1;
                let target = adjacency[current][next_index];
                if target == root {
                    cycles.push(stack.clone());
                } else if rank[target] > rank[root] && !on_stack[target] {
                    stack.push(target);
                    on_stack[target] = true;
                    iters.push(0);
                }
            } else {
                stack.pop();
                on_stack[current] = false;
                iters.pop();
            }
        }
    }

    cycles.sort_by(|a, b| {
        let ka: Vec<usize> = a.iter().map(|&m| rank[m]).collect();
        let kb: Vec<usize> = b.iter().map(|&m| rank[m]).collect();
        ka.cmp(&kb)
    });
    Ok(cycles
        .into_iter()
        .map(|cycle| {
            cycle
                .into_iter()
                .map(|m| netlist.modules[m].id.clone())
                .collect()
        })
        .collect())
}

/// Event-driven simulation with per-module inertial delays.
///
/// Initial state is all LOW with the supply present from t = 0; each
/// module's output follows its gate function of the trigger after the rise
/// or fall delay. Ties are processed in ascending module-id order.
pub fn simulate_logic(
    netlist: &Netlist,
    delays: &DelayModel,
    duration_s: f64,
) -> Result<LogicTrace, LogicError> {
    if !(duration_s > 0.0) {
        return Err(LogicError::InvalidDuration { duration_s });
    }
    let network = LogicNetwork::build(netlist, &BTreeMap::new())?;
    let n = netlist.modules.len();
    let dependents = network.dependents();

    let mut id_order: Vec<usize> = (0..n).collect();
    id_order.sort_by(|&a, &b| netlist.modules[a].id.cmp(&netlist.modules[b].id));
    let mut rank = vec![0usize; n];
    for (r, &module) in id_order.iter().enumerate() {
        rank[module] = r;
    }

    #[derive(PartialEq)]
    struct Event {
        time: f64,
        rank: usize,
        module: usize,
        target: LogicLevel,
        seq: u64,
    }
    impl Eq for Event {}
    impl Ord for Event {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // BinaryHeap is a max-heap; reverse for earliest-first.
            other
                .time
                .total_cmp(&self.time)
                .then(other.rank.cmp(&self.rank))
        }
    }
    impl PartialOrd for Event {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut outputs = vec![LogicLevel::Low; n];
    let mut pending: Vec<Option<(f64, LogicLevel, u64)>> = vec![None; n];
    let mut heap: BinaryHeap<Event> = BinaryHeap::new();
    let mut seq = 0u64;

    let schedule = |module: usize,
                    now: f64,
                    outputs: &[LogicLevel],
                    pending: &mut Vec<Option<(f64, LogicLevel, u64)>>,
                    heap: &mut BinaryHeap<Event>,
                    seq: &mut u64,
                    network: &LogicNetwork| {
        let target = network.module_target(module, outputs);
        match pending[module] {
            Some((_, t, _)) if t == target => {}
            _ => {
                if target == outputs[module] {
                    pending[module] = None;
                } else {
                    *seq += 1;
                    let time = now + delays.delay_to(target);
                    pending[module] = Some((time, target, *seq));
                    heap.push(Event {
                        time,
                        rank: rank[module],
                        module,
                        target,
                        seq: *seq,
                    });
                }
            }
        }
    };

    // Supply appears at t = 0: every module re-evaluates.
    for &module in &id_order {
        schedule(
            module,
            0.0,
            &outputs,
            &mut pending,
            &mut heap,
            &mut seq,
            &network,
        );
    }

    let trace_nets = network.trace_nets();
    let mut times = vec![0.0];
    let mut rows = vec![trace_row(&network, &trace_nets, &outputs)];

    while let Some(event) = heap.pop() {
        let valid = matches!(pending[event.module], Some((t, tgt, s)) if t == event.time && tgt == event.target && s == event.seq);
        if !valid {
            continue;
        }
        if event.time > duration_s {
            break;
        }
        pending[event.module] = None;
        outputs[event.module] = event.target;

        // Re-evaluate everything downstream of the switched module.
        for &consumer in &dependents[event.module] {
            schedule(
                consumer,
                event.time,
                &outputs,
                &mut pending,
                &mut heap,
                &mut seq,
                &network,
            );
        }

        let row = trace_row(&network, &trace_nets, &outputs);
        if *times.last().unwrap() == event.time {
            *rows.last_mut().unwrap() = row;
        } else {
            times.push(event.time);
            rows.push(row);
        }
    }

    Ok(LogicTrace {
        nodes: trace_nets.into_iter().map(|(_, name)| name).collect(),
        times_s: times,
        levels: rows,
    })
}

fn trace_row(
    network: &LogicNetwork,
    trace_nets: &[(usize, String)],
    outputs: &[LogicLevel],
) -> Vec<LogicLevel> {
    trace_nets
        .iter()
        .map(|(net, _)| network.net_level(*net, outputs))
        .collect()
}

/// Mean interval between consecutive rising edges at a node, after
/// discarding everything before `settle_s`.
pub fn measure_period(trace: &LogicTrace, node: &str, settle_s: f64) -> Result<f64, LogicError> {
    let edges: Vec<f64> = trace
        .rising_edges(node)
        .into_iter()
        .filter(|&t| t >= settle_s)
        .collect();
    if edges.len() < 3 {
        return Err(LogicError::NotOscillating {
            node: node.to_string(),
            rising_edges: edges.len(),
        });
    }
    Ok((edges[edges.len() - 1] - edges[0]) / (edges.len() - 1) as f64)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogicError {
    #[error("netlist is not valid: {first_error}")]
    InvalidNetlist { first_error: String },
    #[error("generic gate wiring is incomplete: {reason}")]
    IncompleteWiring { reason: String },
    #[error("combinational evaluation impossible, feedback cycle {cycle}")]
    CombinationalLoop { cycle: String },
    #[error("node {node} does not exist in the netlist")]
    UnknownNode { node: String },
    #[error("delays must be positive, got rise {rise_s} s / fall {fall_s} s")]
    InvalidDelay { rise_s: f64, fall_s: f64 },
    #[error("duration must be positive, got {duration_s} s")]
    InvalidDuration { duration_s: f64 },
    #[error("node {node} is not oscillating ({rising_edges} rising edges after settling)")]
    NotOscillating { node: String, rising_edges: usize },
    #[error("malformed logic CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuator::BellowSpec;
    use crate::circuit::{ModuleSpec, Netlist, SupplySpec, TubeSpec};

    fn ring(n: usize) -> Netlist {
        Netlist::ring_oscillator(n, BellowSpec::preset_t16(), 2.0, 140.0).unwrap()
    }

    /// Inverter chain M1 -> M2 -> ... -> Mn with a free trigger on M1.
    fn inverter_chain(n: usize) -> Netlist {
        let mut modules = Vec::new();
        for i in 1..=n {
            modules.push(ModuleSpec::inverter(None).with_id(format!("M{i}").as_str()));
        }
        let mut tubes = Vec::new();
        for i in 0..n {
            if i + 1 < n {
                tubes.push(TubeSpec {
                    from: Endpoint::new(format!("M{}", i + 1).as_str(), Socket::SpThru),
                    to: Endpoint::new(format!("M{}", i + 2).as_str(), Socket::SpIn),
                    length_mm: 140.0,
                    inner_diameter_mm: 2.0,
                });
                tubes.push(TubeSpec {
                    from: Endpoint::new(format!("M{}", i + 1).as_str(), Socket::OutNext),
                    to: Endpoint::new(format!("M{}", i + 2).as_str(), Socket::T),
                    length_mm: 140.0,
                    inner_diameter_mm: 2.0,
                });
            }
        }
        Netlist {
            modules,
            tubes,
            supplies: vec![SupplySpec {
                module: "M1".into(),
                pressure_bar: 2.0,
            }],
            stoppers: vec![],
        }
    }

    #[test]
    fn inverter_truth_table_matches_operational_diagram() {
        let table = truth_table(&GateKind::Inverter).unwrap();
        assert_eq!(table.inputs, vec![Socket::T]);
        assert_eq!(
            table.rows,
            vec![
                (vec![LogicLevel::Low], LogicLevel::High),
                (vec![LogicLevel::High], LogicLevel::Low),
            ]
        );
    }

    #[test]
    fn buffer_truth_table_matches_operational_diagram() {
        let table = truth_table(&GateKind::Buffer).unwrap();
        assert_eq!(
            table.rows,
            vec![
                (vec![LogicLevel::Low], LogicLevel::Low),
                (vec![LogicLevel::High], LogicLevel::High),
            ]
        );
    }

    #[test]
    fn and_wiring_computes_conjunction() {
        let table = truth_table(&GateKind::Generic(GenericWiring::and_gate())).unwrap();
        assert_eq!(table.inputs, vec![Socket::C2, Socket::T]);
        let l = LogicLevel::Low;
        let h = LogicLevel::High;
        assert_eq!(table.output_for(&[h, h]), Some(h));
        assert_eq!(table.output_for(&[h, l]), Some(l));
        assert_eq!(table.output_for(&[l, h]), Some(l));
        assert_eq!(table.output_for(&[l, l]), Some(l));
    }

    #[test]
    fn or_wiring_computes_disjunction() {
        let table = truth_table(&GateKind::Generic(GenericWiring::or_gate())).unwrap();
        let l = LogicLevel::Low;
        let h = LogicLevel::High;
        assert_eq!(table.output_for(&[l, l]), Some(l));
        assert_eq!(table.output_for(&[l, h]), Some(h));
        assert_eq!(table.output_for(&[h, l]), Some(h));
        assert_eq!(table.output_for(&[h, h]), Some(h));
    }

    #[test]
    fn conventional_wiring_has_contention_rows() {
        let table = truth_table(&GateKind::Generic(GenericWiring::conventional())).unwrap();
        assert_eq!(table.rows.len(), 8);
        // T low (passes atmosphere) while C2 high (supply open): contention.
        let row = table
            .output_for(&[LogicLevel::Low, LogicLevel::Low, LogicLevel::High])
            .unwrap();
        assert_eq!(row, LogicLevel::Indeterminate);
    }

    #[test]
    fn incomplete_generic_wiring_is_rejected() {
        let wiring = GenericWiring {
            valves: vec![],
            inputs: vec![Socket::T],
        };
        assert!(matches!(
            truth_table(&GateKind::Generic(wiring)),
            Err(LogicError::IncompleteWiring { .. })
        ));
    }

    #[test]
    fn double_negation_in_a_chain() {
        let netlist = inverter_chain(2);
        let mut inputs = BTreeMap::new();
        inputs.insert(Endpoint::new("M1", Socket::T), LogicLevel::High);
        let levels = eval_combinational(&netlist, &inputs).unwrap();
        assert_eq!(
            levels.level(&Endpoint::new("M1", Socket::Out)),
            Some(LogicLevel::Low)
        );
        assert_eq!(
            levels.level(&Endpoint::new("M2", Socket::Out)),
            Some(LogicLevel::High)
        );
    }

    #[test]
    fn single_inverter_inverts() {
        let netlist = inverter_chain(1);
        let mut inputs = BTreeMap::new();
        inputs.insert(Endpoint::new("M1", Socket::T), LogicLevel::High);
        let levels = eval_combinational(&netlist, &inputs).unwrap();
        assert_eq!(
            levels.level(&Endpoint::new("M1", Socket::Out)),
            Some(LogicLevel::Low)
        );
    }

    #[test]
    fn ring_is_a_combinational_loop() {
        let err = eval_combinational(&ring(4), &BTreeMap::new());
        assert!(matches!(err, Err(LogicError::CombinationalLoop { .. })));
    }

    #[test]
    fn ring_of_four_has_one_cycle() {
        let loops = find_feedback_loops(&ring(4)).unwrap();
        assert_eq!(loops.len(), 1);
        let ids: Vec<&str> = loops[0].iter().map(|id| id.as_str()).collect();
        assert_eq!(ids, vec!["M1", "M2", "M3", "M4"]);
    }

    #[test]
    fn chain_has_no_cycles() {
        let netlist = inverter_chain(3);
        assert!(find_feedback_loops(&netlist).unwrap().is_empty());
    }

    #[test]
    fn two_rings_give_two_cycles() {
        let a = ring(3);
        let b = ring(2);
        let mut merged = a.clone();
        let rename = |id: &crate::circuit::ModuleId| format!("R{}", id.as_str());
        for module in &b.modules {
            merged
                .modules
                .push(module.clone().with_id(rename(&module.id).as_str()));
        }
        for tube in &b.tubes {
            merged.tubes.push(TubeSpec {
                from: Endpoint::new(rename(&tube.from.module).as_str(), tube.from.socket),
                to: Endpoint::new(rename(&tube.to.module).as_str(), tube.to.socket),
                length_mm: tube.length_mm,
                inner_diameter_mm: tube.inner_diameter_mm,
            });
        }
        for supply in &b.supplies {
            merged.supplies.push(SupplySpec {
                module: rename(&supply.module).as_str().into(),
                pressure_bar: supply.pressure_bar,
            });
        }
        for stopper in &b.stoppers {
            merged.stoppers.push(crate::circuit::StopperSpec {
                module: rename(&stopper.module).as_str().into(),
                socket: stopper.socket,
            });
        }
        assert!(merged.validate().is_valid());
        let loops = find_feedback_loops(&merged).unwrap();
        assert_eq!(loops.len(), 2);
    }

    #[test]
    fn ring_period_is_twice_the_delay_sum() {
        let delays = DelayModel::new(0.7475, 0.7475).unwrap();
        let trace = simulate_logic(&ring(4), &delays, 60.0).unwrap();
        let period = measure_period(&trace, "M1.OUT", 12.0).unwrap();
        assert!((period - 5.98).abs() < 1e-9, "period {period}");
    }

    #[test]
    fn doubled_delays_double_the_period() {
        let delays = DelayModel::new(1.495, 1.495).unwrap();
        let trace = simulate_logic(&ring(4), &delays, 120.0).unwrap();
        let period = measure_period(&trace, "M1.OUT", 24.0).unwrap();
        assert!((period - 11.96).abs() < 1e-9, "period {period}");
    }

    #[test]
    fn ring_period_formula_holds_for_sizes_one_to_eight() {
        for n in 1..=8 {
            let delays = DelayModel::new(0.4, 0.4).unwrap();
            let expected = 2.0 * n as f64 * 0.4;
            let trace = simulate_logic(&ring(n), &delays, expected * 12.0).unwrap();
            let period = measure_period(&trace, "M1.OUT", expected * 3.0).unwrap();
            assert!(
                (period - expected).abs() < 1e-9,
                "ring {n}: period {period}, expected {expected}"
            );
        }
    }

    #[test]
    fn delay_scaling_scales_period_linearly() {
        for k in [0.5, 2.0, 4.0] {
            let delays = DelayModel::new(0.7475 * k, 0.7475 * k).unwrap();
            let trace = simulate_logic(&ring(4), &delays, 80.0 * k).unwrap();
            let period = measure_period(&trace, "M1.OUT", 16.0 * k).unwrap();
            assert!((period - 5.98 * k).abs() < 1e-9);
        }
    }

    #[test]
    fn buffer_only_ring_latches() {
        // Two buffers in a loop: no inversion, settles and never oscillates.
        let mut netlist = ring(2);
        netlist.modules[0] = ModuleSpec::buffer(None).with_id("M1");
        assert!(netlist.validate().is_valid());
        let delays = DelayModel::new(0.5, 0.5).unwrap();
        let trace = simulate_logic(&netlist, &delays, 30.0).unwrap();
        let err = measure_period(&trace, "M1.OUT", 0.0);
        assert!(matches!(err, Err(LogicError::NotOscillating { .. })));
        // All-low is the latched state for an all-low start.
        let last = trace.levels.last().unwrap();
        assert!(last.iter().all(|&l| l == LogicLevel::Low));
    }

    #[test]
    fn settled_chain_matches_combinational_eval() {
        let netlist = inverter_chain(3);
        let mut inputs = BTreeMap::new();
        inputs.insert(Endpoint::new("M1", Socket::T), LogicLevel::Low);
        let levels = eval_combinational(&netlist, &inputs).unwrap();
        let delays = DelayModel::new(0.1, 0.1).unwrap();
        let trace = simulate_logic(&netlist, &delays, 10.0).unwrap();
        let last = trace.levels.last().unwrap();
        for (node, level) in trace.nodes.iter().zip(last) {
            if let Some((module, socket)) = node.split_once('.') {
                if socket == "OUT" {
                    let expected = levels.level(&Endpoint::new(module, Socket::Out)).unwrap();
                    assert_eq!(*level, expected, "node {node}");
                }
            }
        }
    }

    #[test]
    fn synthetic_square_wave_measures_two_seconds() {
        let nodes = vec!["N".to_string()];
        let mut times = Vec::new();
        let mut levels = Vec::new();
        for i in 0..20 {
            times.push(i as f64);
            let level = if i % 2 == 0 {
                LogicLevel::Low
            } else {
                LogicLevel::High
            };
            levels.push(vec![level]);
        }
        let trace = LogicTrace {
            nodes,
            times_s: times,
            levels,
        };
        let period = measure_period(&trace, "N", 0.0).unwrap();
        assert!((period - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_trace_is_not_oscillating() {
        let trace = LogicTrace {
            nodes: vec!["N".to_string()],
            times_s: vec![0.0, 1.0],
            levels: vec![vec![LogicLevel::Low], vec![LogicLevel::Low]],
        };
        assert!(matches!(
            measure_period(&trace, "N", 0.0),
            Err(LogicError::NotOscillating { .. })
        ));
    }

    #[test]
    fn csv_export_encodes_levels() {
        let trace = LogicTrace {
            nodes: vec!["M1.OUT".to_string()],
            times_s: vec![0.0, 1.5],
            levels: vec![vec![LogicLevel::Low], vec![LogicLevel::High]],
        };
        let csv = trace.to_csv();
        assert!(csv.starts_with("time_s,M1.OUT\n"));
        assert!(csv.contains("0.000000,0\n"));
        assert!(csv.contains("1.500000,1\n"));
        let parsed = LogicTrace::from_csv(&csv).unwrap();
        assert_eq!(parsed.nodes, trace.nodes);
        assert_eq!(parsed.levels, trace.levels);
    }
}
