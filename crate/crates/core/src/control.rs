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
//! Cartesian PID position control of the fingertips.
//!
//! Each finger runs its own PID on the Cartesian position error. The PID
//! output is a desired fingertip velocity, mapped to joint velocities through
//! the damped pseudoinverse of that finger's Jacobian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    self, damped_ik, jacobian_from_frames, JointVector, KinematicChain, Vec3, JOINTS_PER_FINGER,
    NUM_FINGERS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    /// Proportional gain per axis, 1/s.
    pub kp: Vec3,
    /// Integral gain per axis, 1/s^2.
    pub ki: Vec3,
    /// Derivative gain per axis.
    pub kd: Vec3,
    /// Per-axis bound on the error integral, m*s.
    pub integral_clamp: f64,
    /// IK damping.
    pub lambda: f64,
    /// Bound on the commanded fingertip speed, m/s.
    pub max_cart_speed: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: Vec3::repeat(25.0),
            ki: Vec3::repeat(0.1),
            kd: Vec3::repeat(0.2),
            integral_clamp: 0.05,
            lambda: kinematics::DEFAULT_LAMBDA,
            max_cart_speed: 0.5,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp", &self.kp), ("ki", &self.ki), ("kd", &self.kd)] {
            if !v.iter().all(|g| g.is_finite() && *g >= 0.0) {
                return Err(Error::config(format!("gains.{name}"), "gains must be finite and >= 0"));
            }
        }
        if !(self.integral_clamp > 0.0) {
            return Err(Error::config("gains.integral_clamp", "must be > 0"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("gains.lambda", "must be finite and >= 0"));
        }
        if !(self.max_cart_speed > 0.0) {
            return Err(Error::config("gains.max_cart_speed", "must be > 0"));
        }
        Ok(())
    }
}

/// PID memory for one fingertip.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: Vec3,
    pub prev_error: Vec3,
    pub initialized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlDiagnostics {
    /// Cartesian error norm per finger, m.
    pub error_norm: [f64; NUM_FINGERS],
    /// Commanded fingertip speed per finger, m/s.
    pub commanded_speed: [f64; NUM_FINGERS],
    /// `|e_t - e_{t-1}|` per finger, m. Zero on a fresh PID state.
    pub error_jump: [f64; NUM_FINGERS],
}

impl ControlDiagnostics {
    pub fn max_error_jump(&self) -> f64 {
        self.error_jump.iter().copied().fold(0.0, f64::max)
    }
}

/// One PID update: `v = kp*e + ki*I + kd*de/dt`, with the integral clamped
/// per axis and the output scaled down to `max_cart_speed` if needed.
///
/// The derivative acts on the error and is zero on the first call.
pub fn pid_step(
    error: &Vec3,
    state: &PidState,
    gains: &ControllerGains,
    dt: f64,
) -> Result<(Vec3, PidState)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if !error.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite position error"));
    }
    let clamp = gains.integral_clamp;
    let integral = (state.integral + error * dt).map(|v| v.clamp(-clamp, clamp));
    let derivative = if state.initialized {
        (error - state.prev_error) / dt
    } else {
        Vec3::zeros()
    };
    let mut v = gains.kp.component_mul(error)
        + gains.ki.component_mul(&integral)
        + gains.kd.component_mul(&derivative);
    let speed = v.norm();
    if speed > gains.max_cart_speed {
        v *= gains.max_cart_speed / speed;
        // Rounding can leave the norm an ulp above the bound.
        while v.norm() > gains.max_cart_speed {
            v *= 1.0 - f64::EPSILON;
        }
    }
    Ok((
        v,
        PidState {
            integral,
            prev_error: *error,
            initialized: true,
        },
    ))
}

/// Output of [`cpc_command`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpcOutput {
    pub joint_velocity: JointVector,
    pub pid_states: [PidState; NUM_FINGERS],
    pub diagnostics: ControlDiagnostics,
}

/// Cartesian position control of all three fingertips toward `targets`.
pub fn cpc_command(
    chain: &KinematicChain,
    q: &JointVector,
    targets: &[Vec3; NUM_FINGERS],
    pid_states: &[PidState; NUM_FINGERS],
    gains: &ControllerGains,
    dt: f64,
) -> Result<CpcOutput> {
    if !targets.iter().all(|t| t.iter().all(|v| v.is_finite())) {
        return Err(Error::invalid("non-finite fingertip target"));
    }
    let pose = kinematics::forward_kinematics(chain, q)?;
    let mut joint_velocity = JointVector::zeros();
    let mut states = *pid_states;
    let mut diagnostics = ControlDiagnostics::default();
    for f in 0..NUM_FINGERS {
        let frames = &pose.fingers[f];
        let error = targets[f] - frames.tip;
        let (v, next) = pid_step(&error, &pid_states[f], gains, dt)?;
        let qdot = damped_ik(&jacobian_from_frames(frames), &v, gains.lambda)?;
        joint_velocity.set_finger(f, std::array::from_fn(|j| qdot[j]));
        diagnostics.error_norm[f] = error.norm();
        diagnostics.commanded_speed[f] = v.norm();
        diagnostics.error_jump[f] = if pid_states[f].initialized {
            (error - pid_states[f].prev_error).norm()
        } else {
            0.0
        };
        states[f] = next;
    }
    debug_assert_eq!(joint_velocity.0.len(), NUM_FINGERS * JOINTS_PER_FINGER);
    Ok(CpcOutput {
        joint_velocity,
        pid_states: states,
        diagnostics,
    })
}

/// Feedforward torque that cancels gravity loading.
pub fn gravity_comp_torque(chain: &KinematicChain, q: &JointVector) -> Result<JointVector> {
    Ok(kinematics::gravity_torques(chain, q)?.scale(-1.0))
}
