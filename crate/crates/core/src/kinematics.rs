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
//! Geometric model of the three-finger manipulator.
//!
//! All quantities are expressed in the world frame: z up, arena centered at the
//! origin. Each finger is a serial chain of three revolute joints. A joint
//! rotates its link frame about `axis` (given in the parent frame), then
//! `offset` translates from that joint to the next one (or to the fingertip
//! for the last joint).
//!
//! The Jacobians returned here are positional, world-frame Jacobians of the
//! fingertip with respect to that finger's three joint angles.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

pub const NUM_FINGERS: usize = 3;
pub const JOINTS_PER_FINGER: usize = 3;
pub const NUM_JOINTS: usize = NUM_FINGERS * JOINTS_PER_FINGER;

/// Default IK damping.
pub const DEFAULT_LAMBDA: f64 = 0.01;
/// `damped_ik` with `lambda = 0` refuses systems whose JJ^T condition
/// estimate exceeds this.
pub const SINGULARITY_CONDITION: f64 = 1e12;
/// Number of joint-space samples used by [`reachable`].
pub const REACH_SAMPLES: usize = 1000;
/// Position tolerance for a sampled IK solve to count as reaching a point.
pub const REACH_TOLERANCE: f64 = 1e-3;

const REACH_SEED: u64 = 0x7269_6e67_6572;
const REACH_REFINE_CANDIDATES: usize = 8;
const REACH_REFINE_ITERS: usize = 200;
const REACH_LAMBDA: f64 = 1e-5;

/// Joint positions, velocities or torques for all nine joints, finger-major.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub [f64; NUM_JOINTS]);

impl JointVector {
    pub fn zeros() -> Self {
        Self([0.0; NUM_JOINTS])
    }

    /// Fails unless `values` has exactly nine entries.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_JOINTS] = values.try_into().map_err(|_| {
            Error::invalid(format!(
                "joint vector needs {NUM_JOINTS} entries, got {}",
                values.len()
            ))
        })?;
        Ok(Self(arr))
    }

    pub fn finger(&self, finger: usize) -> [f64; JOINTS_PER_FINGER] {
        let s = finger * JOINTS_PER_FINGER;
        [self.0[s], self.0[s + 1], self.0[s + 2]]
    }

    pub fn set_finger(&mut self, finger: usize, values: [f64; JOINTS_PER_FINGER]) {
        let s = finger * JOINTS_PER_FINGER;
        self.0[s..s + JOINTS_PER_FINGER].copy_from_slice(&values);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.map(|v| v * c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for JointVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for JointVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// One revolute joint and the link it drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    /// Unit rotation axis in the parent frame.
    pub axis: Vec3,
    /// Translation from this joint to the next joint (or fingertip).
    pub offset: Vec3,
    pub limit_lo: f64,
    pub limit_hi: f64,
    pub link_mass: f64,
    /// Translation from this joint to the link's center of mass.
    pub link_com_offset: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerSpec {
    pub base_position: Vec3,
    /// Rotation of the finger's base frame about world z.
    pub base_yaw: f64,
    pub joints: [JointSpec; JOINTS_PER_FINGER],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub fingers: [FingerSpec; NUM_FINGERS],
    /// Gravitational acceleration, m/s^2.
    pub gravity: Vec3,
}

/// Link frames of one finger at a given configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerFrames {
    /// World position of each joint.
    pub joint_positions: [Vec3; JOINTS_PER_FINGER],
    /// World direction of each joint axis.
    pub joint_axes: [Vec3; JOINTS_PER_FINGER],
    /// World orientation of each link frame (after its joint rotation).
    pub link_rotations: [Rotation3<f64>; JOINTS_PER_FINGER],
    /// World position of each link's center of mass.
    pub com_positions: [Vec3; JOINTS_PER_FINGER],
    pub tip: Vec3,
}

/// Output of [`forward_kinematics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainPose {
    pub fingers: [FingerFrames; NUM_FINGERS],
}

impl ChainPose {
    pub fn tips(&self) -> [Vec3; NUM_FINGERS] {
        [self.fingers[0].tip, self.fingers[1].tip, self.fingers[2].tip]
    }
}

impl KinematicChain {
    /// Default tabletop geometry: bases at 120 degree spacing on a 0.15 m circle,
    /// links of 0.16/0.16/0.08 m with masses 0.3/0.2/0.1 kg and mid-link COMs.
    ///
    /// The first joint of each finger yaws about world z and carries a link
    /// sloping down toward the arena; the other two pitch about the horizontal
    /// axis perpendicular to the finger. At zero angles a finger points at the
    /// arena center.
    pub fn default_trifinger() -> Self {
        let lengths = [0.16, 0.16, 0.08];
        let masses = [0.3, 0.2, 0.1];
        let axes = [Vec3::z(), Vec3::y(), Vec3::y()];
        let limits = DEFAULT_LIMITS;
        let finger = |bearing_deg: f64| {
            let bearing = bearing_deg.to_radians();
            let joints = std::array::from_fn(|j| {
                // The first link slopes down toward the arena at a fixed angle.
                let pitch = if j == 0 { UPPER_LINK_PITCH } else { 0.0 };
                let offset = Vec3::new(pitch.cos(), 0.0, -pitch.sin()) * lengths[j];
                JointSpec {
                    axis: axes[j],
                    offset,
                    limit_lo: limits[j].0,
                    limit_hi: limits[j].1,
                    link_mass: masses[j],
                    link_com_offset: offset * 0.5,
                }
            });
            FingerSpec {
                base_position: Vec3::new(
                    BASE_RADIUS * bearing.cos(),
                    BASE_RADIUS * bearing.sin(),
                    BASE_HEIGHT,
                ),
                base_yaw: bearing + std::f64::consts::PI,
                joints,
            }
        };
        Self {
            fingers: [finger(135.0), finger(255.0), finger(15.0)],
            gravity: Vec3::new(0.0, 0.0, -9.81),
        }
    }

    /// Checks the structural invariants (unit axes, ordered limits, nonnegative
    /// masses, finite numbers).
    pub fn validate(&self) -> Result<()> {
        if !self.gravity.iter().all(|v| v.is_finite()) {
            return Err(Error::config("chain.gravity", "non-finite value"));
        }
        for (i, f) in self.fingers.iter().enumerate() {
            let finite = f.base_position.iter().all(|v| v.is_finite()) && f.base_yaw.is_finite();
            if !finite {
                return Err(Error::config(
                    format!("chain.fingers[{i}]"),
                    "non-finite base pose",
                ));
            }
            for (j, joint) in f.joints.iter().enumerate() {
                let field = format!("chain.fingers[{i}].joints[{j}]");
                let vectors = [joint.axis, joint.offset, joint.link_com_offset];
                if !vectors.iter().all(|v| v.iter().all(|c| c.is_finite())) {
                    return Err(Error::config(field, "non-finite vector"));
                }
                if (joint.axis.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::config(
                        format!("{field}.axis"),
                        format!("axis must have unit norm, got {}", joint.axis.norm()),
                    ));
                }
                if !(joint.limit_lo < joint.limit_hi) {
                    return Err(Error::config(
                        format!("{field}.limit_lo"),
                        "limit_lo must be < limit_hi",
                    ));
                }
                if !(joint.link_mass >= 0.0) {
                    return Err(Error::config(
                        format!("{field}.link_mass"),
                        "link_mass must be >= 0",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn limits(&self, finger: usize) -> [(f64, f64); JOINTS_PER_FINGER] {
        self.fingers[finger]
            .joints
            .each_ref()
            .map(|j| (j.limit_lo, j.limit_hi))
    }

    /// Clamps every joint into its limits.
    pub fn clamp_to_limits(&self, q: &JointVector) -> JointVector {
        let mut out = *q;
        for f in 0..NUM_FINGERS {
            let lim = self.limits(f);
            for j in 0..JOINTS_PER_FINGER {
                let k = f * JOINTS_PER_FINGER + j;
                out[k] = out[k].clamp(lim[j].0, lim[j].1);
            }
        }
        out
    }

    /// Sum of link lengths of every finger.
    pub fn total_link_length(&self, finger: usize) -> f64 {
        max_reach(self, finger)
    }
}

impl Default for KinematicChain {
    fn default() -> Self {
        Self::default_trifinger()
    }
}

/// Radius of the circle the finger bases sit on.
pub const BASE_RADIUS: f64 = 0.15;
/// Height of the finger bases above the floor.
pub const BASE_HEIGHT: f64 = 0.28;
/// Downward slope of the first link, rad.
pub const UPPER_LINK_PITCH: f64 = 0.5;
// The yaw range exceeds a half turn so a finger can reach behind its own base.
const DEFAULT_LIMITS: [(f64, f64); JOINTS_PER_FINGER] = [(-3.3, 3.3), (-1.0, 2.8), (0.25, 2.8)];

fn check_finger(finger: usize) -> Result<()> {
    if finger >= NUM_FINGERS {
        return Err(Error::invalid(format!("finger index {finger} out of range")));
    }
    Ok(())
}

fn check_finite(q: &JointVector) -> Result<()> {
    if !q.is_finite() {
        return Err(Error::invalid("joint vector contains non-finite values"));
    }
    Ok(())
}

/// Forward kinematics of a single finger from its three joint angles.
pub fn finger_frames(chain: &KinematicChain, finger: usize, q: [f64; 3]) -> FingerFrames {
    let spec = &chain.fingers[finger];
    let mut rot = Rotation3::from_axis_angle(&Vec3::z_axis(), spec.base_yaw);
    let mut pos = spec.base_position;
    let mut joint_positions = [Vec3::zeros(); 3];
    let mut joint_axes = [Vec3::zeros(); 3];
    let mut link_rotations = [Rotation3::identity(); 3];
    let mut com_positions = [Vec3::zeros(); 3];
    for (j, joint) in spec.joints.iter().enumerate() {
        joint_positions[j] = pos;
        joint_axes[j] = rot * joint.axis;
        rot *= Rotation3::from_axis_angle(&Unit::new_unchecked(joint.axis), q[j]);
        link_rotations[j] = rot;
        com_positions[j] = pos + rot * joint.link_com_offset;
        pos += rot * joint.offset;
    }
    FingerFrames {
        joint_positions,
        joint_axes,
        link_rotations,
        com_positions,
        tip: pos,
    }
}

/// Fingertip positions and link frames of all three fingers.
pub fn forward_kinematics(chain: &KinematicChain, q: &JointVector) -> Result<ChainPose> {
    check_finite(q)?;
    Ok(ChainPose {
        fingers: std::array::from_fn(|f| finger_frames(chain, f, q.finger(f))),
    })
}

/// Fingertip positions only.
pub fn fingertips(chain: &KinematicChain, q: &JointVector) -> Result<[Vec3; NUM_FINGERS]> {
    Ok(forward_kinematics(chain, q)?.tips())
}

/// Positional Jacobian of a fingertip from precomputed frames: column `j` is
/// `axis_j x (tip - joint_j)`.
pub fn jacobian_from_frames(frames: &FingerFrames) -> Mat3 {
    Mat3::from_fn(|r, c| {
        frames.joint_axes[c]
            .cross(&(frames.tip - frames.joint_positions[c]))[r]
    })
}

/// 3x3 Jacobian of fingertip `finger` with respect to that finger's joints.
pub fn fingertip_jacobian(chain: &KinematicChain, q: &JointVector, finger: usize) -> Result<Mat3> {
    check_finger(finger)?;
    check_finite(q)?;
    Ok(jacobian_from_frames(&finger_frames(chain, finger, q.finger(finger))))
}

/// Damped least-squares velocity IK: `J^T (J J^T + lambda I)^-1 xdot`.
///
/// With `lambda = 0` this is the exact inverse and a singular `J J^T` is an
/// error rather than being silently regularized.
pub fn damped_ik(jac: &Mat3, xdot: &Vec3, lambda: f64) -> Result<Vec3> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !jac.iter().chain(xdot.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite Jacobian or velocity"));
    }
    let gram = jac * jac.transpose();
    if lambda == 0.0 {
        let eig = gram.symmetric_eigenvalues();
        let max = eig.max().abs();
        let min = eig.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if max == 0.0 || condition > SINGULARITY_CONDITION {
            return Err(Error::Singular { condition });
        }
        let y = gram
            .lu()
            .solve(xdot)
            .ok_or(Error::Singular { condition })?;
        return Ok(jac.transpose() * y);
    }
    let damped = gram + Mat3::identity() * lambda;
    let y = damped
        .cholesky()
        .map(|c| c.solve(xdot))
        .ok_or_else(|| Error::invalid("damped system not positive definite"))?;
    Ok(jac.transpose() * y)
}

/// Generalized gravity force on every joint:
/// `tau[j] = sum over links k distal to j of Jcom_k[:, j] . (m_k g)`.
///
/// This is the torque gravity exerts; the compensating command is its negation.
pub fn gravity_torques(chain: &KinematicChain, q: &JointVector) -> Result<JointVector> {
    check_finite(q)?;
    let mut tau = JointVector::zeros();
    for f in 0..NUM_FINGERS {
        let frames = finger_frames(chain, f, q.finger(f));
        let joints = &chain.fingers[f].joints;
        for j in 0..JOINTS_PER_FINGER {
            let mut t = 0.0;
            for k in j..JOINTS_PER_FINGER {
                let arm = frames.com_positions[k] - frames.joint_positions[j];
                let col = frames.joint_axes[j].cross(&arm);
                t += col.dot(&(chain.gravity * joints[k].link_mass));
            }
            tau[f * JOINTS_PER_FINGER + j] = t;
        }
    }
    Ok(tau)
}

/// Sum of the finger's link offset lengths.
pub fn max_reach(chain: &KinematicChain, finger: usize) -> f64 {
    chain.fingers[finger]
        .joints
        .iter()
        .map(|j| j.offset.norm())
        .sum()
}

fn clamp3(q: [f64; 3], limits: &[(f64, f64); 3]) -> [f64; 3] {
    std::array::from_fn(|j| q[j].clamp(limits[j].0, limits[j].1))
}

/// Fixed, seeded 10x10x10 stratified sample of the finger's joint-limit box.
pub fn joint_samples(chain: &KinematicChain, finger: usize) -> Vec<[f64; 3]> {
    let limits = chain.limits(finger);
    let per_axis = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(REACH_SEED);
    let mut out = Vec::with_capacity(REACH_SAMPLES);
    for a in 0..per_axis {
        for b in 0..per_axis {
            for c in 0..per_axis {
                let cell = [a, b, c];
                out.push(std::array::from_fn(|j| {
                    let (lo, hi) = limits[j];
                    let width = (hi - lo) / per_axis as f64;
                    lo + width * (cell[j] as f64 + rng.gen_range(0.1..0.9))
                }));
            }
        }
    }
    out
}

/// Joint-limit-respecting position IK for one finger, refined from `seed` by
/// damped Gauss-Newton with clamping. Returns the final angles and residual.
pub fn solve_finger_ik(
    chain: &KinematicChain,
    finger: usize,
    target: &Vec3,
    seed: [f64; 3],
    max_iters: usize,
) -> ([f64; 3], f64) {
    let limits = chain.limits(finger);
    let mut q = clamp3(seed, &limits);
    let mut frames = finger_frames(chain, finger, q);
    let mut err = (target - frames.tip).norm();
    for _ in 0..max_iters {
        if err < 1e-12 {
            break;
        }
        let jac = jacobian_from_frames(&frames);
        let Ok(mut dq) = damped_ik(&jac, &(target - frames.tip), REACH_LAMBDA) else {
            break;
        };
        let n = dq.norm();
        if n > 0.5 {
            dq *= 0.5 / n;
        }
        let next = clamp3(std::array::from_fn(|j| q[j] + dq[j]), &limits);
        let next_frames = finger_frames(chain, finger, next);
        let next_err = (target - next_frames.tip).norm();
        if next_err >= err {
            break;
        }
        q = next;
        frames = next_frames;
        err = next_err;
    }
    (q, err)
}

/// Whether fingertip `finger` can be placed at `point` within joint limits.
///
/// The point must lie inside the reach sphere, and one of the best candidates
/// from [`joint_samples`] must refine to within [`REACH_TOLERANCE`].
pub fn reachable(chain: &KinematicChain, finger: usize, point: &Vec3) -> bool {
    if finger >= NUM_FINGERS || !point.iter().all(|v| v.is_finite()) {
        return false;
    }
    let base = chain.fingers[finger].base_position;
    if (point - base).norm() > max_reach(chain, finger) {
        return false;
    }
    let mut scored: Vec<(f64, [f64; 3])> = joint_samples(chain, finger)
        .into_iter()
        .map(|q| ((finger_frames(chain, finger, q).tip - point).norm(), q))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored
        .iter()
        .take(REACH_REFINE_CANDIDATES)
        .any(|(_, seed)| solve_finger_ik(chain, finger, point, *seed, REACH_REFINE_ITERS).1 < REACH_TOLERANCE)
}
