//! Golden-file and property tests for the `.plg` text format.

use proptest::prelude::*;

use plg_core::dsl::{parse, serialize};
use plg_core::{
    BellowSpec, Endpoint, ModuleSpec, Netlist, Socket, StopperSpec, SupplySpec, TubeSpec,
};

fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

#[test]
fn ring4_fixture_is_byte_exact() {
    let netlist = Netlist::ring_oscillator(4, BellowSpec::preset_t16(), 2.0, 140.0).unwrap();
    let text = serialize(&netlist).unwrap();
    let golden = std::fs::read_to_string(fixture_path("ring4.plg")).unwrap();
    assert_eq!(
        text, golden,
        "canonical serialization drifted from the golden file"
    );
}

#[test]
fn ring4_fixture_parses_to_builder_output() {
    let golden = std::fs::read_to_string(fixture_path("ring4.plg")).unwrap();
    let parsed = parse(&golden).unwrap();
    let built = Netlist::ring_oscillator(4, BellowSpec::preset_t16(), 2.0, 140.0).unwrap();
    assert_eq!(parsed, built);
}

/// Valid netlists for the round-trip property: rings with randomized
/// parameters, extra bellow geometry, ratio overrides, and optional
/// fan-out taps from module outputs to added buffer stages.
fn arb_netlist() -> impl Strategy<Value = Netlist> {
    let base = (
        1usize..9,
        1.0f64..3.0,
        0.5f64..4.0,
        80.0f64..300.0,
        prop::collection::vec(0.01f64..1.0, 0..8),
        prop::option::of(0.01f64..1.0),
        prop::option::of((1.0f64..4.0, 20.0f64..50.0)),
    );
    base.prop_map(
        |(n, thickness, pressure, tube_len, tap_ratios, ratio_override, bellow_geom)| {
            let mut bellow = BellowSpec::with_thickness(thickness).unwrap();
            if let Some((pitch, length)) = bellow_geom {
                bellow.pitch_mm = pitch;
                bellow.length_mm = length;
            }
            let mut netlist = Netlist::ring_oscillator(n, bellow, pressure, tube_len).unwrap();
            if let Some(ratio) = ratio_override {
                let last = netlist.modules.len() - 1;
                netlist.modules[last].output_ratio = ratio;
            }
            // Tap buffers listening on ring outputs.
            for (i, ratio) in tap_ratios.into_iter().enumerate() {
                let id = format!("T{}", i + 1);
                let module = ModuleSpec::buffer(None)
                    .with_id(id.as_str())
                    .with_output_ratio(ratio);
                let source = format!("M{}", (i % n) + 1);
                netlist.tubes.push(TubeSpec {
                    from: Endpoint::new(source.as_str(), Socket::OutNext),
                    to: Endpoint::new(id.as_str(), Socket::T),
                    length_mm: tube_len,
                    inner_diameter_mm: 2.0,
                });
                netlist.supplies.push(SupplySpec {
                    module: id.as_str().into(),
                    pressure_bar: pressure,
                });
                netlist.stoppers.push(StopperSpec {
                    module: id.as_str().into(),
                    socket: Socket::SpThru,
                });
                netlist.modules.push(module);
            }
            netlist.canonicalize();
            netlist
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn parse_serialize_roundtrip(netlist in arb_netlist()) {
        prop_assert!(netlist.validate().is_valid());
        let text = serialize(&netlist).unwrap();
        let parsed = parse(&text).unwrap();
        prop_assert_eq!(parsed, netlist);
    }

    #[test]
    fn serialize_is_deterministic(netlist in arb_netlist()) {
        let a = serialize(&netlist).unwrap();
        let b = serialize(&netlist).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn parse_never_panics(text in "\\PC*") {
        let _ = parse(&text);
    }

    #[test]
    fn parse_error_spans_stay_in_bounds(text in "(module|supply|connect|stopper|[a-z ]{0,12}|[0-9.]{0,6}|->|\\(|\\)){0,8}\n?") {
        if let Err(err) = parse(&text) {
            let line = text.lines().nth(err.span.line - 1).unwrap_or("");
            prop_assert!(err.span.column <= line.chars().count() + 1);
        }
    }
}
