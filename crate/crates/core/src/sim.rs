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
//! Deterministic fixed-timestep world: velocity-driven fingers and a cube that
//! is either free (falls under gravity) or rigidly carried by the fingertips.
//!
//! While carried, the cube position is the mean of the fingertip positions
//! minus their stored contact offsets. A finger that strays more than
//! `eps_slip` from its offset breaks the grasp and the cube drops.
//!
//! The cube stays upright and its yaw never changes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp::{CubeGeom, GraspSpec};
use crate::kinematics::{self, JointVector, KinematicChain, Vec3, NUM_FINGERS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Control and integration step, s.
    pub dt: f64,
    /// Per-joint speed limit, rad/s.
    pub joint_vel_limit: f64,
    /// Fingertip-to-contact distance below which a grasp closes, m.
    pub eps_contact: f64,
    /// Slip residual above which a grasp breaks, m.
    pub eps_slip: f64,
    pub gravity_z: f64,
    pub arena_radius: f64,
    pub floor_z: f64,
    pub cube_half_extent: f64,
    /// Ideal gravity compensation. When off, joints drift along the gravity
    /// torque at `droop_gain` rad/s per N*m.
    pub gravity_comp_enabled: bool,
    pub droop_gain: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.004,
            joint_vel_limit: 4.0,
            eps_contact: 0.008,
            eps_slip: 0.02,
            gravity_z: -9.81,
            arena_radius: 0.195,
            floor_z: 0.0,
            cube_half_extent: 0.0325,
            gravity_comp_enabled: true,
            droop_gain: 2.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sim.dt", self.dt),
            ("sim.joint_vel_limit", self.joint_vel_limit),
            ("sim.eps_contact", self.eps_contact),
            ("sim.arena_radius", self.arena_radius),
            ("sim.cube_half_extent", self.cube_half_extent),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(field, "must be finite and > 0"));
            }
        }
        if !(self.eps_slip > self.eps_contact) {
            return Err(Error::config("sim.eps_slip", "must exceed eps_contact"));
        }
        if !self.gravity_z.is_finite() || !self.floor_z.is_finite() || !(self.droop_gain >= 0.0) {
            return Err(Error::config("sim", "non-finite gravity, floor or droop gain"));
        }
        Ok(())
    }

    /// Height of the cube center when resting on the floor.
    pub fn resting_z(&self) -> f64 {
        self.floor_z + self.cube_half_extent
    }
}

/// Starting joint configuration: fingertips raised above the arena center.
pub const REST_FINGER_POSE: [f64; 3] = [0.0, 1.55, 2.2];

pub fn rest_pose() -> JointVector {
    let mut q = JointVector::zeros();
    for f in 0..NUM_FINGERS {
        q.set_finger(f, REST_FINGER_POSE);
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Attachment {
    Free,
    Attached {
        grasp: GraspSpec,
        /// Per-finger fingertip offset from the cube center, cube frame.
        offsets: [Vec3; NUM_FINGERS],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub q: JointVector,
    pub dq: JointVector,
    /// Last joint velocity command as received (before clamping).
    pub last_command: JointVector,
    pub cube: CubeGeom,
    pub attachment: Attachment,
    pub cube_velocity_z: f64,
    /// Largest per-finger slip residual at the last step (0 when free).
    pub slip_residual: f64,
    pub t: f64,
    pub step_index: u64,
}

impl WorldState {
    /// Fingers at `q` (clamped to limits), cube at rest at `cube_xy` with yaw 0.
    pub fn new(chain: &KinematicChain, params: &SimParams, q: JointVector, cube_xy: [f64; 2]) -> Self {
        Self {
            q: chain.clamp_to_limits(&q),
            dq: JointVector::zeros(),
            last_command: JointVector::zeros(),
            cube: CubeGeom::new(
                Vec3::new(cube_xy[0], cube_xy[1], params.resting_z()),
                0.0,
                params.cube_half_extent,
            ),
            attachment: Attachment::Free,
            cube_velocity_z: 0.0,
            slip_residual: 0.0,
            t: 0.0,
            step_index: 0,
        }
    }

    pub fn is_attached(&self) -> bool {
        matches!(self.attachment, Attachment::Attached { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    GraspAcquired,
    CubeDropped { max_residual: f64 },
    SubgoalReached,
    GoalSwitched,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub step_index: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

fn clamp_cube(pos: &mut Vec3, params: &SimParams) -> bool {
    let mut clamped = false;
    let rz = params.resting_z();
    if pos.z < rz {
        pos.z = rz;
        clamped = true;
    }
    let r = pos.xy().norm();
    if r > params.arena_radius {
        let s = params.arena_radius / r;
        pos.x *= s;
        pos.y *= s;
        clamped = true;
    }
    clamped
}

/// Advances the world by one step of `params.dt` under a joint velocity command.
pub fn sim_step(
    world: &WorldState,
    command: &JointVector,
    chain: &KinematicChain,
    params: &SimParams,
) -> Result<(WorldState, Vec<SimEvent>)> {
    if !command.is_finite() {
        return Err(Error::invalid("non-finite joint velocity command"));
    }
    let dt = params.dt;
    let lim = params.joint_vel_limit;
    let mut dq = JointVector(command.0.map(|v| v.clamp(-lim, lim)));
    if !params.gravity_comp_enabled {
        let tau = kinematics::gravity_torques(chain, &world.q)?;
        for k in 0..dq.0.len() {
            dq[k] += params.droop_gain * tau[k];
        }
    }
    let mut q = world.q;
    for k in 0..q.0.len() {
        q[k] += dq[k] * dt;
    }
    let q = chain.clamp_to_limits(&q);

    let mut next = WorldState {
        q,
        dq,
        last_command: *command,
        // Time from the step count, so goal switches do not drift.
        t: (world.step_index + 1) as f64 * dt,
        step_index: world.step_index + 1,
        ..*world
    };
    let mut events = Vec::new();

    match world.attachment {
        Attachment::Attached { offsets, .. } => {
            let tips = kinematics::fingertips(chain, &q)?;
            let world_offsets = offsets.map(|o| world.cube.rotate(&o));
            let mut center = Vec3::zeros();
            for f in 0..NUM_FINGERS {
                center += tips[f] - world_offsets[f];
            }
            center /= NUM_FINGERS as f64;
            clamp_cube(&mut center, params);
            next.cube.position = center;
            next.cube_velocity_z = 0.0;
            let residual = (0..NUM_FINGERS)
                .map(|f| (tips[f] - (center + world_offsets[f])).norm())
                .fold(0.0, f64::max);
            next.slip_residual = residual;
            if residual > params.eps_slip {
                next.attachment = Attachment::Free;
                events.push(SimEvent {
                    step_index: next.step_index,
                    kind: EventKind::CubeDropped {
                        max_residual: residual,
                    },
                });
            }
        }
        Attachment::Free => {
            next.slip_residual = 0.0;
            let mut v = world.cube_velocity_z + params.gravity_z * dt;
            let mut pos = world.cube.position;
            pos.z += v * dt;
            if pos.z <= params.resting_z() {
                pos.z = params.resting_z();
                v = 0.0;
            }
            clamp_cube(&mut pos, params);
            next.cube.position = pos;
            next.cube_velocity_z = v;
        }
    }
    Ok((next, events))
}

/// Closes the grasp if every assigned fingertip is within `eps_contact` of its
/// world contact. The stored offsets are the fingertip positions relative to
/// the cube at that instant.
pub fn try_attach(
    world: &WorldState,
    spec: &GraspSpec,
    chain: &KinematicChain,
    params: &SimParams,
) -> Result<(WorldState, Option<SimEvent>)> {
    if world.is_attached() {
        return Ok((*world, None));
    }
    let tips = kinematics::fingertips(chain, &world.q)?;
    let contacts = spec.world_contacts(&world.cube);
    let close = (0..NUM_FINGERS).all(|f| (tips[f] - contacts[f]).norm() <= params.eps_contact);
    if !close {
        return Ok((*world, None));
    }
    let offsets = tips.map(|tip| world.cube.unrotate(&(tip - world.cube.position)));
    let next = WorldState {
        attachment: Attachment::Attached {
            grasp: *spec,
            offsets,
        },
        cube_velocity_z: 0.0,
        slip_residual: 0.0,
        ..*world
    };
    let event = SimEvent {
        step_index: world.step_index,
        kind: EventKind::GraspAcquired,
    };
    Ok((next, Some(event)))
}

/// What a controller can see of the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub q: JointVector,
    pub dq: JointVector,
    pub last_command: JointVector,
    pub cube_position: Vec3,
    pub cube_yaw: f64,
    /// Simulator-internal; the real system cannot observe attachment, so this
    /// is for diagnostics only and not part of the robot/cube observation.
    pub attached: bool,
}

pub fn observe(world: &WorldState) -> Observation {
    Observation {
        q: world.q,
        dq: world.dq,
        last_command: world.last_command,
        cube_position: world.cube.position,
        cube_yaw: world.cube.yaw,
        attached: world.is_attached(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grasp::plan_triangle_grasp;
    use approx::assert_relative_eq;

    fn setup() -> (KinematicChain, SimParams, WorldState) {
        let chain = KinematicChain::default_trifinger();
        let params = SimParams::default();
        let world = WorldState::new(&chain, &params, rest_pose(), [0.0, 0.0]);
        (chain, params, world)
    }

    /// World with the fingertips placed exactly on the triangle contacts.
    fn grasped() -> (KinematicChain, SimParams, WorldState, GraspSpec) {
        let (chain, params, mut world) = setup();
        world.cube.position.z = 0.06;
        let spec = plan_triangle_grasp(&world.cube);
        let contacts = spec.world_contacts(&world.cube);
        for f in 0..NUM_FINGERS {
            let (qf, err) =
                kinematics::solve_finger_ik(&chain, f, &contacts[f], REST_FINGER_POSE, 500);
            assert!(err < 1e-10);
            world.q.set_finger(f, qf);
        }
        (chain, params, world, spec)
    }

    #[test]
    fn static_world() {
        let (chain, params, world) = setup();
        let (next, events) = sim_step(&world, &JointVector::zeros(), &chain, &params).unwrap();
        assert!(events.is_empty());
        assert_eq!(next.q, world.q);
        assert_eq!(next.cube, world.cube);
        assert_eq!(next.step_index, 1);
        assert_eq!(next.t, params.dt);
    }

    #[test]
    fn free_fall_matches_euler_oracle() {
        let (chain, params, mut world) = setup();
        let h = 0.1;
        world.cube.position.z = params.resting_z() + h;
        // Independent replica of the semi-implicit Euler scheme.
        let (mut z, mut v, mut landed_at) = (world.cube.position.z, 0.0f64, None);
        for k in 1..=200u64 {
            v += params.gravity_z * params.dt;
            z += v * params.dt;
            if z <= params.resting_z() {
                z = params.resting_z();
                v = 0.0;
                landed_at.get_or_insert(k);
            }
            world = sim_step(&world, &JointVector::zeros(), &chain, &params).unwrap().0;
            assert_eq!(world.cube.position.z, z, "step {k}");
            assert_eq!(world.cube_velocity_z, v);
        }
        let continuous = ((2.0 * h / params.gravity_z.abs()).sqrt() / params.dt).ceil() as u64;
        let landed = landed_at.unwrap();
        assert!(landed.abs_diff(continuous) <= 2, "{landed} vs {continuous}");
    }

    #[test]
    fn common_mode_motion_carries_cube() {
        let (chain, params, world, spec) = grasped();
        let (world, ev) = try_attach(&world, &spec, &chain, &params).unwrap();
        assert!(ev.is_some());
        let before = world.cube.position;
        // Joint velocities that translate every fingertip by (0.001, 0, 0).
        let mut cmd = JointVector::zeros();
        for f in 0..NUM_FINGERS {
            let jac = kinematics::fingertip_jacobian(&chain, &world.q, f).unwrap();
            let qd = kinematics::damped_ik(&jac, &Vec3::new(0.001 / params.dt, 0.0, 0.0), 0.0).unwrap();
            cmd.set_finger(f, [qd[0], qd[1], qd[2]]);
        }
        let (next, events) = sim_step(&world, &cmd, &chain, &params).unwrap();
        assert!(events.is_empty());
        assert!(next.is_attached());
        assert_relative_eq!(next.cube.position - before, Vec3::new(0.001, 0.0, 0.0), epsilon = 2e-5);
        assert!(next.slip_residual < 1e-5);
    }

    #[test]
    fn attach_exact_and_threshold() {
        let (chain, params, world, spec) = grasped();
        let (attached, ev) = try_attach(&world, &spec, &chain, &params).unwrap();
        assert_eq!(ev.unwrap().kind, EventKind::GraspAcquired);
        assert_relative_eq!(attached.cube.position, world.cube.position);
        let (next, events) = sim_step(&attached, &JointVector::zeros(), &chain, &params).unwrap();
        assert!(events.is_empty());
        assert!(next.slip_residual < 1e-12);

        // Move finger 0's contact target just beyond eps_contact.
        let mut far = world;
        let mut spec_far = spec;
        let shift = Vec3::new(0.0, params.eps_contact + 1e-6, 0.0);
        spec_far.contacts[spec.finger_assignment[0]].point -= shift;
        far.attachment = Attachment::Free;
        let (_, ev) = try_attach(&far, &spec_far, &chain, &params).unwrap();
        assert!(ev.is_none());
    }

    #[test]
    fn differential_motion_drops_cube() {
        let (chain, params, world, spec) = grasped();
        let (mut world, _) = try_attach(&world, &spec, &chain, &params).unwrap();
        let mut cmd = JointVector::zeros();
        cmd[4] = 2.0;
        let mut dropped = None;
        for _ in 0..200 {
            let (next, events) = sim_step(&world, &cmd, &chain, &params).unwrap();
            world = next;
            if let Some(e) = events.first() {
                dropped = Some(*e);
                break;
            }
            assert!(world.slip_residual <= params.eps_slip);
        }
        match dropped.map(|e| e.kind) {
            Some(EventKind::CubeDropped { max_residual }) => assert!(max_residual > params.eps_slip),
            other => panic!("expected drop, got {other:?}"),
        }
        assert!(!world.is_attached());
    }

    #[test]
    fn command_is_clamped_and_limits_hold() {
        let (chain, params, world) = setup();
        let cmd = JointVector([100.0; 9]);
        let (next, _) = sim_step(&world, &cmd, &chain, &params).unwrap();
        for k in 0..9 {
            assert_relative_eq!(next.q[k] - world.q[k], params.joint_vel_limit * params.dt, epsilon = 1e-12);
        }
        let mut w = world;
        for _ in 0..2000 {
            w = sim_step(&w, &cmd, &chain, &params).unwrap().0;
        }
        assert_eq!(w.q, chain.clamp_to_limits(&JointVector([10.0; 9])));
        assert!(sim_step(&world, &JointVector([f64::NAN; 9]), &chain, &params).is_err());
    }

    #[test]
    fn droop_without_compensation() {
        let (chain, mut params, world) = setup();
        let (comp, _) = sim_step(&world, &JointVector::zeros(), &chain, &params).unwrap();
        params.gravity_comp_enabled = false;
        let (droop, _) = sim_step(&world, &JointVector::zeros(), &chain, &params).unwrap();
        assert_eq!(comp.q, world.q);
        assert_ne!(droop.q, world.q);
        // Fingertips sink under gravity.
        let before = kinematics::fingertips(&chain, &world.q).unwrap();
        let after = kinematics::fingertips(&chain, &droop.q).unwrap();
        assert!((0..3).all(|f| after[f].z < before[f].z));
    }

    #[test]
    fn observation_projection() {
        let (chain, params, world, spec) = grasped();
        let obs = observe(&world);
        assert_eq!(obs.q, world.q);
        assert_eq!(obs.cube_position, world.cube.position);
        assert!(!obs.attached);
        let (w, _) = try_attach(&world, &spec, &chain, &params).unwrap();
        assert!(observe(&w).attached);
    }

    #[test]
    fn param_validation() {
        assert!(SimParams::default().validate().is_ok());
        let bad = SimParams { eps_slip: 0.005, ..SimParams::default() };
        assert!(bad.validate().is_err());
        let bad = SimParams { dt: 0.0, ..SimParams::default() };
        assert!(bad.validate().is_err());
    }
}
