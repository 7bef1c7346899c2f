//! Simulation toolkit for electronics-free pneumatic-logic robots.
//!
//! Models circuits of preconfigured pneumatic logic gate (PLG) modules as a
//! netlist, simulates them both as an event-driven digital network and as a
//! continuous-time pressure system, fits bellow-actuator elongation data, and
//! integrates 1-D peristaltic locomotion under anisotropic Coulomb friction.
//!
//! The crate is organised around the pipeline:
//!
//! ```text
//! .plg text ── dsl ──> Netlist ── pneumo ──> PressureTrace
//!                         │                       │
//!                       logic                 actuator (drive)
//!                         │                       │
//!                    LogicTrace            locomotion ──> GaitTrace
//! ```

pub mod actuator;
pub mod circuit;
pub mod dsl;
pub mod locomotion;
pub mod logic;
pub mod net;
pub mod pneumo;

pub use circuit::{
    Endpoint, GateKind, GenericWiring, LogicLevel, ModuleId, ModuleSpec, Netlist, Socket,
    StopperSpec, SupplySpec, TubeSpec, ValidationReport, ValveKind, ValveSpec,
};

pub use actuator::BellowSpec;
