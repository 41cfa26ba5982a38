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

use common::transition_table as table;
use trifinger_cpc::eval::EpisodeLog;
use trifinger_cpc::grasp::GraspKind;
use trifinger_cpc::kinematics::Vec3;
use trifinger_cpc::sim::EventKind;
use trifinger_cpc::statemachine::*;
use trifinger_cpc::trajectory::GoalEntry;
use Phase::*;

#[test]
fn every_phase_and_input_matches_the_table() {
    for phase in Phase::ALL {
        for bits in 0u32..128 {
            let b = |k: u32| bits & (1 << k) != 0;
            let input = TransitionInput {
                dropped: b(0),
                grasp_acquired: b(1),
                goal_switched: b(2),
                at_pregrasp: b(3),
                goal_reached: b(4),
                regrasp_ready: b(5),
                episode_over: b(6),
            };
            assert_eq!(transition(phase, &input), table(phase, &input), "{phase:?} {input:?}");
        }
    }
}

#[test]
fn events_map_onto_inputs() {
    let i = TransitionInput::default().with_events(&[
        EventKind::CubeDropped { max_residual: 0.03 },
        EventKind::GoalSwitched,
    ]);
    assert!(i.dropped && i.goal_switched && !i.grasp_acquired);
    let i = TransitionInput::default().with_events(&[EventKind::GraspAcquired, EventKind::SubgoalReached]);
    assert!(i.grasp_acquired && !i.dropped && !i.goal_switched);
}

fn episode(seed: u64, interp_n: usize, duration: f64) -> EpisodeLog {
    let config = EpisodeConfig { seed, interp_n, duration, ..EpisodeConfig::default() };
    run_episode(&config).unwrap()
}

/// Structural properties every episode log must satisfy.
fn check_log(log: &EpisodeLog, config: &EpisodeConfig) {
    let s = phase_string(log);
    assert!(phase_string_is_regular(&s), "seed {}: {s}", config.seed);
    assert_eq!(log.records.len() as u64, config.step_count());
    assert_eq!(log.records.last().unwrap().phase, Done);
    let goals = config.resolve_goals().unwrap();
    for (k, r) in log.records.iter().enumerate() {
        assert_eq!(r.goal, goals.active_goal(r.step_index as f64 * config.sim.dt), "step {k}");
        if r.phase == Done {
            assert_eq!(r.cmd_speed, 0.0);
        }
        assert!(r.cmd_speed <= config.gains.max_cart_speed);
        let dropped = r.events.iter().any(|e| matches!(e, EventKind::CubeDropped { .. }));
        if dropped {
            assert!(matches!(r.phase, MoveToGoal | Hold), "drop outside a grasped phase");
            if let Some(next) = log.records.get(k + 1) {
                assert!(matches!(next.phase, Recover | Done), "step {k}: drop not followed by Recover");
            }
        }
    }
}

#[test]
fn generated_episodes_are_well_formed() {
    for seed in 0..6 {
        for n in [1, 20] {
            let config = EpisodeConfig { seed, interp_n: n, duration: 40.0, ..EpisodeConfig::default() };
            check_log(&run_episode(&config).unwrap(), &config);
        }
    }
}

#[test]
fn episodes_are_deterministic() {
    assert_eq!(episode(3, 20, 20.0).to_jsonl(), episode(3, 20, 20.0).to_jsonl());
    assert_ne!(episode(3, 20, 20.0).to_jsonl(), episode(4, 20, 20.0).to_jsonl());
}

/// A goal at the cube's own starting position is held without dropping.
#[test]
fn goal_at_start_is_held() {
    let start = Vec3::new(0.0, 0.0, 0.0325);
    let config = EpisodeConfig {
        duration: 20.0,
        goals: GoalSource::Inline { entries: vec![GoalEntry { t_activate: 0.0, goal: start }] },
        ..EpisodeConfig::default()
    };
    let log = run_episode(&config).unwrap();
    check_log(&log, &config);
    assert_eq!(log.drop_count(), 0);
    assert!(log.cumulative_reward() >= -1.0, "{}", log.cumulative_reward());
    assert!(phase_string(&log).starts_with("PCGH"), "{}", phase_string(&log));
}

#[test]
fn chuck_and_fallback_episodes_are_well_formed() {
    for seed in 0..3 {
        let config = EpisodeConfig {
            seed,
            duration: 40.0,
            grasp: GraspKind::ThreeJawChuck,
            perimeter_fallback: Some(GraspKind::Triangle),
            ..EpisodeConfig::default()
        };
        check_log(&run_episode(&config).unwrap(), &config);
    }
}
