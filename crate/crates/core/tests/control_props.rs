/*
  Copyright 2026 The trifinger-cpc Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/
mod common;

use proptest::prelude::*;
use trifinger_cpc::control::*;
use trifinger_cpc::kinematics::*;
use trifinger_cpc::sim::{rest_pose, sim_step, SimParams, WorldState};

fn vec3(scale: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-scale..scale).prop_map(Vec3::from)
}

fn p_only() -> ControllerGains {
    ControllerGains {
        ki: Vec3::zeros(),
        kd: Vec3::zeros(),
        ..ControllerGains::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn commanded_speed_never_exceeds_bound(
        e1 in vec3(1.0), e2 in vec3(1.0), integral in vec3(0.05), max in 0.01f64..2.0,
    ) {
        let gains = ControllerGains { max_cart_speed: max, ki: Vec3::repeat(50.0), ..ControllerGains::default() };
        let state = PidState { integral, prev_error: e1, initialized: true };
        let (v, next) = pid_step(&e2, &state, &gains, 0.004).unwrap();
        prop_assert!(v.norm() <= max);
        prop_assert!(next.integral.amax() <= gains.integral_clamp);
    }

    #[test]
    fn pid_is_deterministic(errors in prop::collection::vec(vec3(0.2), 1..20)) {
        let run = || {
            let mut s = PidState::default();
            let mut out = Vec::new();
            for e in &errors {
                let (v, n) = pid_step(e, &s, &ControllerGains::default(), 0.004).unwrap();
                out.push(v);
                s = n;
            }
            out
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.as_slice(), y.as_slice());
        }
    }

    #[test]
    fn command_composes_pid_and_damped_ik(
        dq in prop::array::uniform9(-0.3f64..0.3), offsets in prop::array::uniform3(vec3(0.05)),
    ) {
        let chain = KinematicChain::default_trifinger();
        let mut q = rest_pose();
        for j in 0..NUM_JOINTS {
            q[j] += dq[j];
        }
        let tips = fingertips(&chain, &q).unwrap();
        let targets: [Vec3; 3] = std::array::from_fn(|f| tips[f] + offsets[f]);
        let gains = ControllerGains::default();
        let states = [PidState::default(); 3];
        let out = cpc_command(&chain, &q, &targets, &states, &gains, 0.004).unwrap();
        for f in 0..NUM_FINGERS {
            let (v, _) = pid_step(&(targets[f] - tips[f]), &states[f], &gains, 0.004).unwrap();
            let j = fingertip_jacobian(&chain, &q, f).unwrap();
            let want = damped_ik(&j, &v, gains.lambda).unwrap();
            prop_assert_eq!(&out.joint_velocity.finger(f)[..], want.as_slice());
        }
    }
}

#[test]
fn proportional_control_converges_monotonically() {
    use rand::{Rng, SeedableRng};
    let chain = KinematicChain::default_trifinger();
    let params = SimParams::default();
    let gains = p_only();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let steps_5s = (5.0 / params.dt) as usize;
    for trial in 0..10 {
        let start = rest_pose();
        let mut goal_q = start;
        for j in 0..NUM_JOINTS {
            goal_q[j] += rng.gen_range(-0.4..0.4);
        }
        let targets = fingertips(&chain, &chain.clamp_to_limits(&goal_q)).unwrap();
        for f in 0..NUM_FINGERS {
            assert!(reachable(&chain, f, &targets[f]), "trial {trial} finger {f}");
        }
        let mut world = WorldState::new(&chain, &params, start, [0.0, 0.0]);
        let mut states = [PidState::default(); 3];
        let mut prev = [f64::INFINITY; 3];
        let mut converged_at = None;
        for k in 0..steps_5s {
            let out = cpc_command(&chain, &world.q, &targets, &states, &gains, params.dt).unwrap();
            states = out.pid_states;
            let err = out.diagnostics.error_norm;
            if k > 0 {
                for f in 0..3 {
                    assert!(err[f] <= prev[f] + 1e-15, "trial {trial} step {k} finger {f}");
                }
            }
            prev = err;
            if converged_at.is_none() && err.iter().all(|&e| e < 1e-3) {
                converged_at = Some(k);
            }
            world = sim_step(&world, &out.joint_velocity, &chain, &params).unwrap().0;
        }
        assert!(converged_at.is_some(), "trial {trial}: final errors {prev:?}");
    }
}
