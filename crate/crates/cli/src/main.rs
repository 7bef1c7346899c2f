//! `plg` — command-line harness for the pneumatic-logic robot toolkit.
//!
//! Subcommands: `truth-table`, `simulate-circuit`, `fit-actuator`,
//! `simulate-robot`, `calibrate`. Exit codes: 0 success, 1 netlist
//! validation failure, 2 simulation or fit failure, 3 usage/parse/I-O
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plg_core::actuator::{self, ElongationMap, IntegrityStatus};
use plg_core::dsl;
use plg_core::locomotion::{self, BodyConfig};
use plg_core::logic::{self, LogicError};
use plg_core::pneumo::{self, PneumoError, PressureTrace};
use plg_core::{GateKind, GenericWiring, Netlist};

use plg_cli::config::RunConfig;
use plg_cli::output::{fit_csv, metrics_csv};
use plg_cli::plot;

#[derive(Parser)]
#[command(
    name = "plg",
    version,
    about = "Simulate pneumatic-logic-gate circuits and peristaltic robots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the truth table of a gate (inverter, buffer, generic, or a
    /// .gate wiring file).
    TruthTable {
        /// Gate name or path to a wiring file.
        gate: String,
    },
    /// Simulate the pressure dynamics of a netlist and measure the
    /// oscillation period.
    SimulateCircuit {
        /// Netlist file (.plg).
        #[arg(long)]
        netlist: PathBuf,
        /// Simulated seconds (default from config, 66 s).
        #[arg(long, allow_negative_numbers = true)]
        duration: Option<f64>,
        /// Extra config file layered over the built-in defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override single keys, e.g. --set pneumo.tau_fill=1.2.
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Output directory for pressure.csv (and logic.csv).
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write the digitized trace as logic.csv.
        #[arg(long)]
        logic: bool,
    },
    /// Fit the saturating-exponential elongation model to bellow
    /// characterization data.
    FitActuator {
        /// CSV with header pressure_bar,thickness_mm,ad_ms,deformation_mm.
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the full pipeline: pressure, bellow drive, locomotion.
    SimulateRobot {
        /// Netlist file; defaults to the built-in 4-module ring.
        #[arg(long)]
        netlist: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        duration: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Emit gait.svg and pressure.svg line charts.
        #[arg(long)]
        plot: bool,
        /// Characterization CSV; defaults to the built-in 1.6 mm data.
        #[arg(long)]
        actuator_data: Option<PathBuf>,
    },
    /// Scale the pneumatic time constants until an n-module ring hits a
    /// target period; writes params.calibrated.
    Calibrate {
        /// Target period in seconds.
        #[arg(long, allow_negative_numbers = true)]
        period: f64,
        /// Ring size.
        #[arg(long)]
        modules: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Failure modes mapped onto the exit-code contract.
enum Failure {
    /// Exit 1: the netlist is structurally invalid.
    Validation(plg_core::ValidationReport),
    /// Exit 2: a simulation, fit or calibration did not produce a result.
    Simulation(String),
    /// Exit 3: arguments, files or formats.
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Simulation(_) => 2,
            Failure::Usage(_) => 3,
        }
    }

    fn report(&self) {
        match self {
            Failure::Validation(report) => {
                eprintln!("error: netlist failed validation");
                for d in &report.errors {
                    eprintln!("  error[{}] {}: {}", d.code, d.location, d.message);
                }
                for d in &report.warnings {
                    eprintln!("  warning[{}] {}: {}", d.code, d.location, d.message);
                }
            }
            Failure::Simulation(msg) => eprintln!("error: {msg}"),
            Failure::Usage(msg) => eprintln!("error: {msg}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<PneumoError> for Failure {
    fn from(e: PneumoError) -> Self {
        match &e {
            PneumoError::InvalidNetlist { .. } => Failure::Simulation(e.to_string()),
            PneumoError::MalformedCsv { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Simulation(e.to_string()),
        }
    }
}

impl From<LogicError> for Failure {
    fn from(e: LogicError) -> Self {
        Failure::Simulation(e.to_string())
    }
}

impl From<locomotion::LocomotionError> for Failure {
    fn from(e: locomotion::LocomotionError) -> Self {
        match &e {
            locomotion::LocomotionError::MalformedCsv { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Simulation(e.to_string()),
        }
    }
}

impl From<actuator::ActuatorError> for Failure {
    fn from(e: actuator::ActuatorError) -> Self {
        match &e {
            actuator::ActuatorError::MalformedCsv { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Simulation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; anything else is a
            // usage error under the exit-code contract.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            failure.report();
            ExitCode::from(failure.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::TruthTable { gate } => cmd_truth_table(&gate),
        Command::SimulateCircuit {
            netlist,
            duration,
            config,
            overrides,
            out,
            logic,
        } => cmd_simulate_circuit(
            &netlist,
            duration,
            config.as_deref(),
            &overrides,
            &out,
            logic,
        ),
        Command::FitActuator { data, out } => cmd_fit_actuator(&data, &out),
        Command::SimulateRobot {
            netlist,
            duration,
            config,
            overrides,
            out,
            plot,
            actuator_data,
        } => cmd_simulate_robot(
            netlist.as_deref(),
            duration,
            config.as_deref(),
            &overrides,
            &out,
            plot,
            actuator_data.as_deref(),
        ),
        Command::Calibrate {
            period,
            modules,
            config,
            overrides,
            out,
        } => cmd_calibrate(period, modules, config.as_deref(), &overrides, &out),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn load_netlist(path: &Path) -> Result<Netlist, Failure> {
    let text = read_file(path)?;
    let netlist = dsl::parse(&text)
        .map_err(|e| Failure::Usage(format!("parse error in {}: {e}", path.display())))?;
    let report = netlist.validate();
    if !report.is_valid() {
        return Err(Failure::Validation(report));
    }
    for warning in &report.warnings {
        eprintln!(
            "warning[{}] {}: {}",
            warning.code, warning.location, warning.message
        );
    }
    // Tube-slack lint against the default module spacing.
    let spacing = 263.0 / 4.0;
    for warning in dsl::lint(&netlist, spacing) {
        eprintln!(
            "warning[{}] {}: {}",
            warning.code, warning.location, warning.message
        );
    }
    Ok(netlist)
}

fn positive_duration(config: &RunConfig, duration: Option<f64>) -> Result<f64, Failure> {
    let d = duration.unwrap_or(config.duration_s);
    if !(d > 0.0) {
        return Err(Failure::Usage(format!(
            "duration must be positive, got {d}"
        )));
    }
    Ok(d)
}

fn cmd_truth_table(gate: &str) -> Result<(), Failure> {
    let kind = match gate {
        "inverter" => GateKind::Inverter,
        "buffer" => GateKind::Buffer,
        "generic" => GateKind::Generic(GenericWiring::conventional()),
        path => {
            if !Path::new(path).exists() {
                return Err(Failure::Usage(format!(
                    "unknown gate {path:?}: expected inverter, buffer, generic or a .gate file"
                )));
            }
            let text = read_file(Path::new(path))?;
            let wiring = dsl::parse_gate_wiring(&text)
                .map_err(|e| Failure::Usage(format!("parse error in {path}: {e}")))?;
            GateKind::Generic(wiring)
        }
    };
    let table = logic::truth_table(&kind).map_err(|e| Failure::Usage(e.to_string()))?;
    print!("{}", table.render());
    Ok(())
}

/// Pressure simulation with digitized period measurement; shared by
/// simulate-circuit and simulate-robot.
fn simulate_and_measure(
    netlist: &Netlist,
    config: &RunConfig,
    duration: f64,
) -> Result<(PressureTrace, logic::LogicTrace, f64), Failure> {
    let trace = pneumo::simulate_pressure(netlist, &config.pneumo, duration)?;
    let digital = pneumo::digitize(&trace, &config.pneumo);
    let node = digital
        .nodes
        .first()
        .cloned()
        .ok_or_else(|| Failure::Simulation("netlist drives no output nodes".to_string()))?;
    let period = logic::measure_period(&digital, &node, duration / 3.0)?;
    Ok((trace, digital, period))
}

fn cmd_simulate_circuit(
    netlist_path: &Path,
    duration: Option<f64>,
    config_file: Option<&Path>,
    overrides: &[String],
    out: &Path,
    logic_csv: bool,
) -> Result<(), Failure> {
    let config = RunConfig::load(config_file, overrides)?;
    let duration = positive_duration(&config, duration)?;
    let netlist = load_netlist(netlist_path)?;
    let (trace, digital, period) = simulate_and_measure(&netlist, &config, duration)?;
    write_file(out, "pressure.csv", &trace.to_csv())?;
    if logic_csv {
        write_file(out, "logic.csv", &digital.to_csv())?;
    }
    println!("period_s {period:.6}");
    println!("frequency_hz {:.6}", 1.0 / period);
    Ok(())
}

fn fit_groups(
    points: &[actuator::ElongationDataPoint],
) -> Result<Vec<actuator::ElongationModel>, Failure> {
    let groups = actuator::group_by_condition(points);
    if groups.is_empty() {
        return Err(Failure::Simulation(
            "characterization data holds no points".to_string(),
        ));
    }
    let mut models = Vec::new();
    for (_, pts) in &groups {
        models.push(actuator::fit_elongation(pts)?);
    }
    Ok(models)
}

fn cmd_fit_actuator(data: &Path, out: &Path) -> Result<(), Failure> {
    let text = read_file(data)?;
    let points = actuator::read_characterization_csv(&text)?;
    let models = fit_groups(&points)?;
    write_file(out, "fit.csv", &fit_csv(&models))?;
    for m in &models {
        println!(
            "fit pressure_bar={} thickness_mm={} x_sat_mm={:.4} amplitude_mm={:.4} tau_ms={:.3} rmse_mm={:.4}",
            m.pressure_bar, m.wall_thickness_mm, m.x_sat_mm, m.amplitude_mm, m.tau_ms, m.fit_rmse_mm
        );
    }
    Ok(())
}

fn cmd_simulate_robot(
    netlist_path: Option<&Path>,
    duration: Option<f64>,
    config_file: Option<&Path>,
    overrides: &[String],
    out: &Path,
    plot: bool,
    actuator_data: Option<&Path>,
) -> Result<(), Failure> {
    let config = RunConfig::load(config_file, overrides)?;
    let duration = positive_duration(&config, duration)?;
    let netlist = match netlist_path {
        Some(path) => load_netlist(path)?,
        None => Netlist::ring_oscillator(4, plg_core::BellowSpec::preset_t16(), 2.0, 140.0)
            .expect("built-in ring"),
    };

    let (trace, digital, period) = simulate_and_measure(&netlist, &config, duration)?;

    // Integrity gate: every bellow must survive the inflation the wave
    // will apply to it (half a period at the supply pressure).
    let supply_bar = netlist
        .supplies
        .iter()
        .map(|s| s.pressure_bar)
        .fold(0.0f64, f64::max);
    let inflation_ms = period / 2.0 * 1e3;
    for module in &netlist.modules {
        if let Some(bellow) = &module.bellow {
            if actuator::check_integrity(bellow.wall_thickness_mm, supply_bar, inflation_ms)
                == IntegrityStatus::FatigueFailure
            {
                return Err(Failure::Simulation(format!(
                    "bellow on {} ({} mm) fails fatigue at {supply_bar} bar with {inflation_ms:.0} ms inflation per cycle",
                    module.id, bellow.wall_thickness_mm
                )));
            }
        }
    }

    let points = match actuator_data {
        Some(path) => actuator::read_characterization_csv(&read_file(path)?)?,
        None => actuator::characterization_t16(),
    };
    let models =
        ElongationMap::new(fit_groups(&points)?).map_err(|e| Failure::Simulation(e.to_string()))?;

    // Segments follow the modules that carry bellows, in module order.
    let mapping: Vec<String> = netlist
        .modules
        .iter()
        .filter(|m| m.bellow.is_some())
        .map(|m| format!("{}.OUT", m.id))
        .collect();
    if mapping.is_empty() {
        return Err(Failure::Simulation(
            "netlist has no bellow-carrying modules to drive".to_string(),
        ));
    }
    let mut body = BodyConfig::uniform(
        mapping.len(),
        config.body_total_length_mm,
        config.body_total_mass_g,
    )
    .map_err(|e| Failure::Simulation(e.to_string()))?;
    body.stiffness_n_per_mm = config.stiffness_n_per_mm;
    body.damping_ns_per_mm = config.damping_ns_per_mm;
    body.marker = config.marker;

    let drive = locomotion::build_drive(
        &trace,
        &mapping,
        &models,
        &body,
        config.tau_release_ms,
        config.pneumo.p_threshold_on_bar,
    )?;
    let gait =
        locomotion::simulate_locomotion(&body, &config.friction(), &drive, config.loco_dt_s)?;
    let metrics = locomotion::gait_metrics(&gait, period, &body)?;

    write_file(out, "pressure.csv", &trace.to_csv())?;
    write_file(out, "logic.csv", &digital.to_csv())?;
    write_file(out, "gait.csv", &gait.to_csv())?;
    write_file(out, "metrics.csv", &metrics_csv(&metrics))?;

    if plot {
        let head = gait.head_mm();
        let head_chart = plot::line_chart(
            "Marker displacement",
            "time [s]",
            "position [mm]",
            &gait.times_s,
            &[plot::Series {
                name: "head",
                y: head,
            }],
        );
        write_file(out, "gait.svg", &head_chart)?;
        let series: Vec<plot::Series> = trace
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| plot::Series {
                name: node,
                y: trace.pressures_bar.iter().map(|row| row[i]).collect(),
            })
            .collect();
        let pressure_chart = plot::line_chart(
            "Module output pressures",
            "time [s]",
            "pressure [bar]",
            &trace.times_s,
            &series,
        );
        write_file(out, "pressure.svg", &pressure_chart)?;
    }

    println!("period_s {period:.6}");
    println!("mean_velocity_mm_s {:.6}", metrics.mean_velocity_mm_s);
    println!("stride_per_cycle_mm {:.6}", metrics.stride_per_cycle_mm);
    println!("body_lengths_per_s {:.6}", metrics.body_lengths_per_s);
    Ok(())
}

fn cmd_calibrate(
    period: f64,
    modules: usize,
    config_file: Option<&Path>,
    overrides: &[String],
    out: &Path,
) -> Result<(), Failure> {
    if !(period > 0.0) {
        return Err(Failure::Usage(format!(
            "target period must be positive, got {period}"
        )));
    }
    if modules < 1 {
        return Err(Failure::Usage("need at least one module".to_string()));
    }
    let config = RunConfig::load(config_file, overrides)?;
    let calibrated = pneumo::calibrate(period, modules, &config.pneumo)?;
    let achieved = pneumo::ring_period(modules, &calibrated, period * 10.0, period * 4.0)?;
    let fragment = format!(
        "# calibrated for a {modules}-module ring at {period} s (achieved {achieved:.6} s)\n\
         pneumo.tau_fill={}\n\
         pneumo.tau_vent={}\n",
        calibrated.tau_fill_s, calibrated.tau_vent_s
    );
    write_file(out, "params.calibrated", &fragment)?;
    println!("achieved_period_s {achieved:.6}");
    println!("tau_fill_s {}", calibrated.tau_fill_s);
    println!("tau_vent_s {}", calibrated.tau_vent_s);
    Ok(())
}
