use std::sync::Arc;

use narrowgap::dynamics::{CommandSetpoint, DynamicsParams, Plant, QuadrotorState, ResponseParams};
use narrowgap::env::{Env, EpisodeConfig, SeedTrajectoryDataset};
use narrowgap::geometry::Clearance;
use nalgebra::Vector3;
use proptest::prelude::*;

fn action() -> impl Strategy<Value = [f64; 4]> {
    (-5.0..30.0f64, -10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(t, x, y, z)| [t, x, y, z])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attitude_stays_unit(cmds in proptest::collection::vec(action(), 1..120)) {
        let mut plant = Plant::new(
            QuadrotorState::at_rest(Vector3::new(0.0, 0.0, 2.0)),
            DynamicsParams::default(),
            ResponseParams::default(),
            0,
        );
        for a in cmds {
            let c = CommandSetpoint::from_array(a).clamped(0.0, 20.0, 6.0);
            plant.step(c, &Vector3::zeros()).unwrap();
            prop_assert!(plant.state.is_finite());
            prop_assert!((plant.state.attitude.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn clamped_actions_within_limits(a in action()) {
        let c = CommandSetpoint::from_array(a).clamped(6.0, 20.0, 6.0).to_array();
        prop_assert!((6.0..=20.0).contains(&c[0]));
        for r in &c[1..] {
            prop_assert!(r.abs() <= 6.0);
        }
    }

    #[test]
    fn episode_invariants(seed in any::<u64>(), cmds in proptest::collection::vec(action(), 1..80)) {
        let cfg = EpisodeConfig::from_toml_str("randomization = \"single_rl\"\nhorizon = 80").unwrap();
        let mut env = Env::new(Arc::new(cfg.resolve().unwrap()), Arc::new(SeedTrajectoryDataset::default()));
        let r0 = env.reset(seed).unwrap();
        prop_assert_eq!(r0.info.clearance, Clearance::Free);
        let mut gap = 0;
        for a in cmds {
            if env.is_done() {
                break;
            }
            let r = env.step(a).unwrap();
            prop_assert!(r.reward.total.is_finite());
            // gap index only moves forward
            prop_assert!(r.info.gap_index >= gap);
            gap = r.info.gap_index;
            if r.info.clearance == Clearance::Collision {
                prop_assert!(r.done);
            }
        }
    }
}
