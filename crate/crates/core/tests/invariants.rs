use beamtrack::analysis::{convergence_bound, mainlobe, BoundInputs};
use beamtrack::array::{
    array_response, f_gain, f_gain_closed_form, reference_pilot, ArrayConfig, BeamformingVector, ChannelState,
    Observation, SnrConfig, SpatialFrequency,
};
use beamtrack::dynamics::{Trajectory, TrajectoryModel};
use beamtrack::trackers::{
    alpha_star, initial_estimate, rbt_step, sweep_observations, StepSizeSchedule, TrackerState,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn antennas() -> impl Strategy<Value = usize> {
    2usize..=32
}

proptest! {
    #[test]
    fn beamformers_are_unit_modulus(phases in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let w = BeamformingVector::from_phases(&phases);
        prop_assert!(w.is_unit_modulus(1e-12));
        let norm: f64 = w.weights().iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_sum_matches_closed_form(m in antennas(), v in -1.0f64..1.0, x in -1.0f64..1.0) {
        let cfg = ArrayConfig::new(m, 0.5).unwrap();
        prop_assert!((f_gain(&cfg, v, x) - f_gain_closed_form(&cfg, v, x)).abs() <= 1e-10);
    }

    #[test]
    fn noise_free_step_moves_toward_truth(m in 2usize..=16, x in -0.9f64..0.9, frac in -0.95f64..0.95) {
        let cfg = ArrayConfig::new(m, 0.5).unwrap();
        let lobe = mainlobe(&cfg, x);
        let start = x + frac * (if frac < 0.0 { x - lobe.lo } else { lobe.hi - x });
        prop_assume!(lobe.contains(start) && (start - x).abs() > 1e-9);
        let state = TrackerState::new(
            SpatialFrequency::clamped(start),
            StepSizeSchedule::Fixed { alpha: alpha_star(&cfg) },
        );
        let y = Observation(array_response(&state.beamformer(&cfg), &cfg, SpatialFrequency::clamped(x)));
        let next = rbt_step(&state, y).estimate.value();
        prop_assert_eq!((next - start).signum(), (x - start).signum());
    }

    #[test]
    fn velocity_trajectory_respects_bound(omega in 0.0f64..0.5, seed in any::<u64>()) {
        let model = TrajectoryModel::reference_velocity(omega);
        let TrajectoryModel::FixedVelocity { bound, .. } = model else { unreachable!() };
        let mut traj = Trajectory::new(model);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for n in 1..=500u64 {
            let (theta, x) = traj.advance(n, &mut rng);
            prop_assert!(theta.abs() <= bound + omega + 1e-12);
            prop_assert!((x.value() - theta.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_is_a_probability(
        m in 4usize..=32,
        db in -5.0f64..30.0,
        n0 in 0.0f64..200.0,
        x in -0.5f64..0.5,
        offset in -0.05f64..0.05,
    ) {
        let cfg = ArrayConfig::new(m, 0.5).unwrap();
        let inputs = BoundInputs {
            rho: 10f64.powf(db / 10.0),
            alpha: alpha_star(&cfg),
            n0,
            x,
            x0_hat: x + offset,
            delta: 0.01,
        };
        if let Some(b) = convergence_bound(&cfg, &inputs).bound() {
            prop_assert!((0.0..=1.0).contains(&b));
        }
    }

    #[test]
    fn noise_free_initial_estimate_in_mainlobe(m in 2usize..=32, x in -0.999f64..0.999) {
        let cfg = ArrayConfig::new(m, 0.5).unwrap();
        let channel = ChannelState::new(SpatialFrequency::new(x).unwrap(), Complex64::new(1.0, 0.0)).unwrap();
        let snr = SnrConfig::noise_free(reference_pilot()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = sweep_observations(&cfg, &channel, &snr, &mut rng);
        let est = initial_estimate(&cfg, &obs, 2 * m).unwrap();
        prop_assert!(mainlobe(&cfg, x).contains(est.value()), "x = {}, estimate = {}", x, est.value());
        prop_assert!((est.value() - x).abs() <= 1.0 / m as f64 + 1e-12);
    }
}
