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
//! Episode orchestration: approach, grasp, interpolated goal pursuit, hold,
//! and regrasp after a drop.
//!
//! Transition table (first matching row wins):
//!
//! | from                   | condition                         | to             |
//! |------------------------|-----------------------------------|----------------|
//! | any                    | episode over                      | Done           |
//! | Done                   | always                            | Done           |
//! | MoveToGoal, Hold       | CubeDropped                       | Recover        |
//! | Recover                | regrasp ready (see below)         | MoveToPregrasp |
//! | MoveToPregrasp         | fingertips within 2*eps_contact of pregrasp targets | CloseGrasp |
//! | CloseGrasp             | GraspAcquired                     | MoveToGoal     |
//! | MoveToGoal             | final subgoal active, cube within tol of goal | Hold |
//! | Hold                   | GoalSwitched                      | MoveToGoal     |
//! | otherwise              |                                   | unchanged      |
//!
//! Recovery normally lasts one step. When no finger assignment can reach the
//! dropped cube from the current arm pose, the joints are first driven back to
//! the rest pose and the grasp is replanned from there.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{cpc_command, ControlDiagnostics, ControllerGains, PidState};
use crate::error::{Error, Result};
use crate::eval::{
    generate_goal_trajectory, reward, EpisodeLog, GoalSampler, LogHeader, RewardRanges,
    StepRecord, LOG_FORMAT,
};
use crate::grasp::{plan_grasp, pregrasp_targets, CubeGeom, GraspKind, GraspSpec, PERMUTATIONS};
use crate::kinematics::{self, JointVector, KinematicChain, Vec3, NUM_FINGERS};
use crate::sim::{self, observe, sim_step, try_attach, Attachment, EventKind, SimParams, WorldState};
use crate::trajectory::{
    make_plan, GoalEntry, GoalTrajectory, WaypointPlan, DEFAULT_INTERP_N, DEFAULT_SUBGOAL_TIMEOUT,
    DEFAULT_SUBGOAL_TOL,
};

/// Cubes at least this fraction of the arena radius from the center count as
/// being on the perimeter for the grasp fallback.
pub const PERIMETER_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    MoveToPregrasp,
    CloseGrasp,
    MoveToGoal,
    Hold,
    Recover,
    Done,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::MoveToPregrasp,
        Phase::CloseGrasp,
        Phase::MoveToGoal,
        Phase::Hold,
        Phase::Recover,
        Phase::Done,
    ];

    pub fn is_grasped(&self) -> bool {
        matches!(self, Phase::MoveToGoal | Phase::Hold)
    }

    /// One-letter code used for phase strings.
    pub fn code(&self) -> char {
        match self {
            Phase::MoveToPregrasp => 'P',
            Phase::CloseGrasp => 'C',
            Phase::MoveToGoal => 'G',
            Phase::Hold => 'H',
            Phase::Recover => 'R',
            Phase::Done => 'D',
        }
    }
}

/// Where the goal sequence comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalSource {
    /// Seeded random goals; `dwell` defaults to `duration / goal_count`.
    Generated {
        goal_count: usize,
        #[serde(default)]
        dwell: Option<f64>,
        z_range: [f64; 2],
    },
    File { path: PathBuf },
    Inline { entries: Vec<GoalEntry> },
}

impl Default for GoalSource {
    fn default() -> Self {
        GoalSource::Generated {
            goal_count: 5,
            dwell: None,
            z_range: [0.0325, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub grasp: GraspKind,
    pub interp_n: usize,
    /// Episode length, s of simulated time.
    pub duration: f64,
    pub seed: u64,
    pub subgoal_tol: f64,
    pub subgoal_timeout: usize,
    /// Pregrasp distance from each contact, m.
    pub standoff: f64,
    /// Grasp used instead of `grasp` when regrasping a cube near the perimeter.
    pub perimeter_fallback: Option<GraspKind>,
    /// Horizontal start position of the cube (resting on the floor).
    pub cube_start: [f64; 2],
    pub goals: GoalSource,
    pub gains: ControllerGains,
    pub sim: SimParams,
    pub reward: RewardRanges,
    pub chain: KinematicChain,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            grasp: GraspKind::Triangle,
            interp_n: DEFAULT_INTERP_N,
            duration: 120.0,
            seed: 0,
            subgoal_tol: DEFAULT_SUBGOAL_TOL,
            subgoal_timeout: DEFAULT_SUBGOAL_TIMEOUT,
            standoff: 0.04,
            perimeter_fallback: None,
            cube_start: [0.0, 0.0],
            goals: GoalSource::default(),
            gains: ControllerGains::default(),
            sim: SimParams::default(),
            reward: RewardRanges::default(),
            chain: KinematicChain::default_trifinger(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::config("duration", "must be > 0"));
        }
        if self.interp_n == 0 {
            return Err(Error::config("interp_n", "must be >= 1"));
        }
        if !(self.subgoal_tol > 0.0) {
            return Err(Error::config("subgoal_tol", "must be > 0"));
        }
        if self.subgoal_timeout == 0 {
            return Err(Error::config("subgoal_timeout", "must be >= 1"));
        }
        if !(self.standoff >= 0.0) {
            return Err(Error::config("standoff", "must be >= 0"));
        }
        if !self.cube_start.iter().all(|v| v.is_finite())
            || Vec3::new(self.cube_start[0], self.cube_start[1], 0.0).norm() > self.sim.arena_radius
        {
            return Err(Error::config("cube_start", "must lie inside the arena"));
        }
        self.gains.validate()?;
        self.sim.validate()?;
        self.reward.validate()?;
        self.chain.validate()
    }

    /// Goal sequence for this episode.
    pub fn resolve_goals(&self) -> Result<GoalTrajectory> {
        let arena = self.sim.arena_radius;
        match &self.goals {
            GoalSource::Generated {
                goal_count,
                dwell,
                z_range,
            } => {
                let dwell = dwell.unwrap_or(self.duration / (*goal_count).max(1) as f64);
                let sampler = GoalSampler {
                    goal_count: *goal_count,
                    dwell,
                    arena_radius: arena,
                    z_range: *z_range,
                };
                generate_goal_trajectory(self.seed, &sampler)
            }
            GoalSource::File { path } => GoalTrajectory::load(path, arena, self.sim.floor_z),
            GoalSource::Inline { entries } => {
                GoalTrajectory::new(entries.clone(), arena, self.sim.floor_z)
            }
        }
    }

    /// SHA-256 over the canonical JSON encoding of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Number of control steps in an episode.
    pub fn step_count(&self) -> u64 {
        (self.duration / self.sim.dt).round().max(1.0) as u64
    }
}

/// Conditions the transition table looks at.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransitionInput {
    pub dropped: bool,
    pub grasp_acquired: bool,
    pub goal_switched: bool,
    pub at_pregrasp: bool,
    pub goal_reached: bool,
    pub regrasp_ready: bool,
    pub episode_over: bool,
}

impl TransitionInput {
    pub fn with_events(mut self, events: &[EventKind]) -> Self {
        for e in events {
            match e {
                EventKind::CubeDropped { .. } => self.dropped = true,
                EventKind::GraspAcquired => self.grasp_acquired = true,
                EventKind::GoalSwitched => self.goal_switched = true,
                EventKind::SubgoalReached => {}
            }
        }
        self
    }
}

/// The phase transition table (see module docs).
pub fn transition(phase: Phase, input: &TransitionInput) -> Phase {
    use Phase::*;
    if input.episode_over || phase == Done {
        return Done;
    }
    if phase.is_grasped() && input.dropped {
        return Recover;
    }
    match phase {
        Recover if input.regrasp_ready => MoveToPregrasp,
        MoveToPregrasp if input.at_pregrasp => CloseGrasp,
        CloseGrasp if input.grasp_acquired => MoveToGoal,
        MoveToGoal if input.goal_reached => Hold,
        Hold if input.goal_switched => MoveToGoal,
        p => p,
    }
}

/// Evaluates the geometric conditions of the table for the current world.
pub fn transition_input(
    world: &WorldState,
    spec: &GraspSpec,
    plan: Option<&WaypointPlan>,
    events: &[EventKind],
    config: &EpisodeConfig,
    retreating: bool,
    episode_over: bool,
) -> Result<TransitionInput> {
    let tips = kinematics::fingertips(&config.chain, &world.q)?;
    let regrasp_ready = !retreating || at_rest(&world.q);
    let pregrasp = pregrasp_targets(spec, &world.cube, config.standoff);
    let at_pregrasp = (0..NUM_FINGERS)
        .all(|f| (tips[f] - pregrasp[f]).norm() <= 2.0 * config.sim.eps_contact);
    let goal_reached = plan.is_some_and(|p| {
        p.on_final() && (world.cube.position - p.source_goal).norm() <= config.subgoal_tol
    });
    Ok(TransitionInput {
        at_pregrasp,
        goal_reached,
        regrasp_ready,
        episode_over,
        ..TransitionInput::default()
    }
    .with_events(events))
}

/// Gain of the joint-space retreat to the rest pose, 1/s.
pub const RETREAT_GAIN: f64 = 4.0;
/// Largest joint distance from the rest pose that counts as arrived, rad.
pub const REST_TOLERANCE: f64 = 0.05;

pub fn at_rest(q: &JointVector) -> bool {
    let rest = sim::rest_pose();
    (0..kinematics::NUM_JOINTS).all(|j| (q[j] - rest[j]).abs() <= REST_TOLERANCE)
}

/// Proportional joint-velocity command toward the rest pose.
pub fn retreat_command(q: &JointVector) -> JointVector {
    let rest = sim::rest_pose();
    let mut cmd = JointVector::zeros();
    for j in 0..kinematics::NUM_JOINTS {
        cmd[j] = RETREAT_GAIN * (rest[j] - q[j]);
    }
    cmd
}

/// World-frame fingertip targets for a phase.
pub fn fingertip_targets_for(
    phase: Phase,
    world: &WorldState,
    spec: &GraspSpec,
    plan: Option<&WaypointPlan>,
    config: &EpisodeConfig,
) -> Result<[Vec3; NUM_FINGERS]> {
    let cube = &world.cube;
    Ok(match phase {
        Phase::MoveToPregrasp => pregrasp_targets(spec, cube, config.standoff),
        Phase::CloseGrasp => spec.world_contacts(cube),
        Phase::MoveToGoal | Phase::Hold => {
            let center = plan.map_or(cube.position, |p| p.active_subgoal());
            let offsets: [Vec3; NUM_FINGERS] = match world.attachment {
                Attachment::Attached { offsets, .. } => offsets,
                Attachment::Free => std::array::from_fn(|f| spec.contact_for(f).point),
            };
            offsets.map(|o| center + cube.rotate(&o))
        }
        Phase::Recover | Phase::Done => kinematics::fingertips(&config.chain, &world.q)?,
    })
}

/// Simulated time budget for checking that an approach acquires the grasp, s.
pub const ROLLOUT_HORIZON: f64 = 5.0;

/// Replays approach and closing on a copy of the world; true if the grasp
/// would be acquired within `ROLLOUT_HORIZON`.
pub fn approach_succeeds(world: &WorldState, spec: &GraspSpec, config: &EpisodeConfig) -> Result<bool> {
    let chain = &config.chain;
    let mut w = world.clone();
    w.attachment = Attachment::Free;
    let mut phase = Phase::MoveToPregrasp;
    let mut pid = [PidState::default(); NUM_FINGERS];
    let steps = (ROLLOUT_HORIZON / config.sim.dt).round() as usize;
    for _ in 0..steps {
        if phase == Phase::MoveToPregrasp {
            let input = transition_input(&w, spec, None, &[], config, false, false)?;
            phase = transition(phase, &input);
        }
        let targets = fingertip_targets_for(phase, &w, spec, None, config)?;
        let out = cpc_command(chain, &w.q, &targets, &pid, &config.gains, config.sim.dt)?;
        pid = out.pid_states;
        w = sim_step(&w, &out.joint_velocity, chain, &config.sim)?.0;
        if phase == Phase::CloseGrasp {
            let (attached, event) = try_attach(&w, spec, chain, &config.sim)?;
            if event.is_some() && attached.is_attached() {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Outcome of grasp replanning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regrasp {
    /// A simulated approach from the current pose acquires this grasp.
    Direct(GraspSpec),
    /// No assignment succeeded; this is the cheapest one.
    Unverified(GraspSpec),
}

impl Regrasp {
    pub fn spec(&self) -> GraspSpec {
        match *self {
            Regrasp::Direct(s) | Regrasp::Unverified(s) => s,
        }
    }
}

/// Grasp for a cube at its current pose, honoring the perimeter fallback.
///
/// Finger assignments are tried in order of increasing travel; the first
/// whose simulated approach acquires the grasp wins, otherwise the cheapest.
pub fn plan_regrasp(world: &WorldState, config: &EpisodeConfig) -> Result<Regrasp> {
    let cube: &CubeGeom = &world.cube;
    let near_perimeter =
        cube.position.xy().norm() >= PERIMETER_FRACTION * config.sim.arena_radius;
    let kind = match config.perimeter_fallback {
        Some(fallback) if near_perimeter => fallback,
        _ => config.grasp,
    };
    let base = plan_grasp(kind, cube, &config.chain);
    let tips = kinematics::fingertips(&config.chain, &world.q)?;
    let contacts = base.contacts.map(|c| cube.to_world(&c.point));
    let mut ranked: Vec<(f64, [usize; NUM_FINGERS])> = PERMUTATIONS
        .iter()
        .map(|perm| {
            let cost = (0..NUM_FINGERS).map(|f| (tips[f] - contacts[perm[f]]).norm()).sum();
            (cost, *perm)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, perm) in &ranked {
        let spec = GraspSpec { finger_assignment: *perm, ..base };
        if approach_succeeds(world, &spec, config)? {
            return Ok(Regrasp::Direct(spec));
        }
    }
    Ok(Regrasp::Unverified(GraspSpec { finger_assignment: ranked[0].1, ..base }))
}

/// Runs one episode to completion.
pub fn run_episode(config: &EpisodeConfig) -> Result<EpisodeLog> {
    config.validate()?;
    let goals = config.resolve_goals()?;
    let chain = &config.chain;
    let params = &config.sim;
    let dt = params.dt;

    let mut world = WorldState::new(chain, params, sim::rest_pose(), config.cube_start);
    let mut spec = plan_regrasp(&world, config)?.spec();
    let mut regrasp: Option<Regrasp> = None;
    let mut phase = Phase::MoveToPregrasp;
    let mut plan: Option<WaypointPlan> = None;
    let mut pid = [PidState::default(); NUM_FINGERS];
    let mut pending: Vec<EventKind> = Vec::new();
    let mut goal_index = 0;

    let steps = config.step_count();
    let mut records = Vec::with_capacity(steps as usize);
    for k in 0..steps {
        let obs = observe(&world);
        let active = goals.active_index(obs_time(&world));
        let goal = goals.entries[active].goal;

        let mut fresh = Vec::new();
        let switched = active != goal_index;
        if switched {
            goal_index = active;
            fresh.push(EventKind::GoalSwitched);
        }
        if phase.is_grasped() && !switched {
            if let Some(p) = plan.as_mut() {
                if p.advance(&obs.cube_position, config.subgoal_tol, config.subgoal_timeout).advanced {
                    fresh.push(EventKind::SubgoalReached);
                }
            }
        }
        let events: Vec<EventKind> = pending.drain(..).chain(fresh.iter().copied()).collect();
        let retreating = matches!(regrasp, Some(Regrasp::Unverified(_)));
        let input = transition_input(
            &world,
            &spec,
            plan.as_ref(),
            &events,
            config,
            retreating,
            k + 1 == steps,
        )?;
        let next = transition(phase, &input);

        match next {
            Phase::MoveToPregrasp if phase == Phase::Recover => {
                spec = match regrasp.take() {
                    Some(Regrasp::Direct(s)) => s,
                    _ => plan_regrasp(&world, config)?.spec(),
                };
            }
            Phase::MoveToGoal if phase != Phase::MoveToGoal || switched => {
                plan = Some(make_plan(&world.cube.position, &goal, config.interp_n)?);
            }
            Phase::Recover if phase != Phase::Recover => {
                regrasp = Some(plan_regrasp(&world, config)?);
                plan = None;
                pid = [PidState::default(); NUM_FINGERS];
            }
            _ => {}
        }
        phase = next;

        let retreating = matches!(regrasp, Some(Regrasp::Unverified(_)));
        let targets = fingertip_targets_for(phase, &world, &spec, plan.as_ref(), config)?;
        let (command, diagnostics) = if phase == Phase::Done {
            (JointVector::zeros(), ControlDiagnostics::default())
        } else if phase == Phase::Recover && retreating {
            (retreat_command(&world.q), ControlDiagnostics::default())
        } else {
            let out = cpc_command(chain, &world.q, &targets, &pid, &config.gains, dt)?;
            pid = out.pid_states;
            (out.joint_velocity, out.diagnostics)
        };

        let (stepped, sim_events) = sim_step(&world, &command, chain, params)?;
        world = stepped;
        let mut step_events = fresh;
        for e in sim_events {
            step_events.push(e.kind);
            pending.push(e.kind);
        }
        if phase == Phase::CloseGrasp {
            let (attached, ev) = try_attach(&world, &spec, chain, params)?;
            world = attached;
            if let Some(e) = ev {
                step_events.push(e.kind);
                pending.push(e.kind);
            }
        }

        records.push(StepRecord {
            step_index: k,
            t: world.t,
            phase,
            cube: world.cube.position,
            goal,
            subgoal: plan.as_ref().map_or(goal, |p| p.active_subgoal()),
            reward: reward(&world.cube.position, &goal, &config.reward),
            error_norms: diagnostics.error_norm,
            error_jump: diagnostics.max_error_jump(),
            cmd_speed: diagnostics.commanded_speed.iter().copied().fold(0.0, f64::max),
            slip_residual: world.slip_residual,
            attached: world.is_attached(),
            events: step_events,
        });
    }

    Ok(EpisodeLog {
        header: LogHeader {
            format: LOG_FORMAT.to_string(),
            seed: config.seed,
            config_hash: config.hash(),
            grasp: config.grasp.as_str().to_string(),
            interp_n: config.interp_n,
            dt,
            duration: config.duration,
            goals,
        },
        records,
    })
}

// Goal activation is evaluated at the start of the step.
fn obs_time(world: &WorldState) -> f64 {
    world.t
}

/// Phase string of a log, one letter per phase entry.
pub fn phase_string(log: &EpisodeLog) -> String {
    log.phase_sequence().iter().map(Phase::code).collect()
}

/// Whether a phase string matches `(P C (G H?)* R?)* P? D`.
///
/// The trailing `P?` admits episodes whose time runs out during an approach;
/// the table sends every phase to Done at episode end.
pub fn phase_string_is_regular(s: &str) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum St {
        Boundary,
        AfterP,
        InGroup,
        AfterG,
        AfterR,
        Accept,
    }
    let mut st = St::Boundary;
    for ch in s.chars() {
        st = match (st, ch) {
            (St::Accept, _) => return false,
            (_, 'D') => St::Accept,
            (St::Boundary | St::InGroup | St::AfterG | St::AfterR, 'P') => St::AfterP,
            (St::AfterP, 'C') => St::InGroup,
            (St::InGroup | St::AfterG, 'G') => St::AfterG,
            (St::AfterG, 'H') => St::InGroup,
            (St::InGroup | St::AfterG, 'R') => St::AfterR,
            _ => return false,
        };
    }
    st == St::Accept
}
