use std::f64::consts::PI;

use patchflow::config::{parse_config, Format, LoadedConfig};
use patchflow::snapshot::Snapshot;
use patchflow_core::patch::MarkerCurve;
use patchflow_core::run::Trajectory;
use patchflow_core::scenario::{InitialCondition, RunConfig};
use patchflow_core::{FluidState, PressureSpec, ScalarField, SimConfig, VectorField};
use proptest::prelude::*;

fn smooth(n: usize, mu: f64, lambda: f64, amplitude: f64) -> RunConfig {
    let mut s = SimConfig::basic(n, 2.0 * PI, mu, lambda, PressureSpec::Gamma { a: 1.0, gamma: 2.0 }, 1.0, 0.1);
    s.diagnostic_interval = Some(0.05);
    RunConfig::new(
        s,
        InitialCondition::Smooth {
            density_amplitude: amplitude,
            mode: [1, 0],
            swirl: 0.3,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snapshots_round_trip_bit_exactly(
        seed in prop::collection::vec(-1.0f64..1.0, 3 * 256),
        t in 0.0f64..10.0,
        markers in prop::option::of(prop::collection::vec((0.5f64..1.5, 0.0f64..0.2), 256..300)),
    ) {
        let loaded = LoadedConfig::from_config(smooth(16, 0.1, 1.0, 0.1));
        let traj = Trajectory::start(&loaded.config).unwrap();
        let mut snap = Snapshot::of(&traj, &loaded.canonical, &loaded.hash);
        let grid = traj.state.grid();
        let rho = ScalarField::from_vec(grid, seed[..256].iter().map(|v| 1.5 + v).collect()).unwrap();
        let u = VectorField { grid, x: seed[256..512].to_vec(), y: seed[512..].to_vec() };
        snap.state = FluidState::new(rho, u, t).unwrap();
        snap.header.t = t;
        snap.markers = markers.map(|m| {
            // distinct points on a star-shaped loop
            let k = m.len() as f64;
            let pts = m.iter().enumerate().map(|(i, (r, e))| {
                let a = 2.0 * PI * (i as f64 + e) / k;
                (PI + r * a.cos(), PI + r * a.sin())
            });
            MarkerCurve::new(pts.collect()).unwrap()
        });
        let bytes = snap.to_bytes();
        let back = Snapshot::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.state, &snap.state);
        prop_assert_eq!(&back.markers, &snap.markers);
        prop_assert_eq!(&back.family, &snap.family);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_snapshots_are_rejected(cut in 0.0f64..1.0) {
        let loaded = LoadedConfig::from_config(smooth(16, 0.1, 1.0, 0.1));
        let traj = Trajectory::start(&loaded.config).unwrap();
        let bytes = Snapshot::of(&traj, &loaded.canonical, &loaded.hash).to_bytes();
        let keep = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(Snapshot::from_bytes(&bytes[..keep]).is_err());
    }

    #[test]
    fn toml_and_json_spellings_hash_alike(
        mu in 0.01f64..2.0,
        lambda in 0.0f64..100.0,
        amplitude in 0.0f64..0.5,
        n in prop::sample::select(vec![16usize, 32, 64]),
    ) {
        let cfg = smooth(n, mu, lambda, amplitude);
        let toml_text = toml::to_string(&cfg).unwrap();
        let json_text = serde_json::to_string_pretty(&cfg).unwrap();
        let a = parse_config(&toml_text, Format::Toml).unwrap();
        let b = parse_config(&json_text, Format::Json).unwrap();
        prop_assert_eq!(&a.hash, &b.hash);
        prop_assert_eq!(&a.config, &cfg);
        prop_assert_eq!(a.hash, LoadedConfig::from_config(cfg).hash);
    }
}
