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
//! Independent reference implementations used by the integration tests.
//! Nothing here calls the code under test except where noted.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use trifinger_cpc::kinematics::{forward_kinematics, JointVector, KinematicChain};
use trifinger_cpc::statemachine::{Phase, TransitionInput};

/// Central finite-difference Jacobian of one fingertip (uses forward
/// kinematics only).
pub fn fd_jacobian(chain: &KinematicChain, q: &JointVector, finger: usize, h: f64) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for c in 0..3 {
        let idx = 3 * finger + c;
        let mut qp = *q;
        let mut qm = *q;
        qp[idx] += h;
        qm[idx] -= h;
        let tp = forward_kinematics(chain, &qp).unwrap().fingers[finger].tip;
        let tm = forward_kinematics(chain, &qm).unwrap().fingers[finger].tip;
        j.set_column(c, &((tp - tm) / (2.0 * h)));
    }
    j
}

/// argmin ‖Jx − b‖² + λ‖x‖², solved as the stacked least-squares problem
/// [J; √λ I] x = [b; 0] through an SVD.
pub fn ridge_oracle(j: &Matrix3<f64>, b: &Vector3<f64>, lambda: f64) -> Vector3<f64> {
    let mut a = DMatrix::<f64>::zeros(6, 3);
    let mut rhs = DVector::<f64>::zeros(6);
    for r in 0..3 {
        for c in 0..3 {
            a[(r, c)] = j[(r, c)];
        }
        a[(3 + r, r)] = lambda.sqrt();
        rhs[r] = b[r];
    }
    let x = a.svd(true, true).solve(&rhs, 1e-300).unwrap();
    Vector3::new(x[0], x[1], x[2])
}

/// r = −‖Δxy‖/range_xy − |Δz|/range_z, written out by hand.
pub fn reward_oracle(p: [f64; 3], g: [f64; 3], range_xy: f64, range_z: f64) -> f64 {
    let dx = p[0] - g[0];
    let dy = p[1] - g[1];
    let dz = p[2] - g[2];
    -(dx * dx + dy * dy).sqrt() / range_xy - dz.abs() / range_z
}

/// Mean and population stddev by Welford's update, median by selection on a
/// sorted copy.
pub fn stats_oracle(xs: &[f64]) -> (f64, f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    let median = if n % 2 == 0 { (s[n / 2 - 1] + s[n / 2]) / 2.0 } else { s[n / 2] };
    (mean, median, (m2 / n as f64).sqrt())
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// All permutations of 0..3 by swapping, independent of the crate's table.
pub fn permutations3() -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                if a != b && b != c && a != c {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

/// Explicit-Euler free fall with a floor clamp, as prescribed.
pub fn euler_fall(z0: f64, floor: f64, g: f64, dt: f64, steps: usize) -> (f64, f64) {
    let (mut z, mut v) = (z0, 0.0);
    for _ in 0..steps {
        v += g * dt;
        z += v * dt;
        if z <= floor {
            z = floor;
            v = 0.0;
        }
    }
    (z, v)
}

/// The documented table, row by row; the first row whose source phase and
/// trigger both match decides.
pub fn transition_table(phase: Phase, i: &TransitionInput) -> Phase {
    use Phase::*;
    let rows: [(&[Phase], bool, Phase); 8] = [
        (&Phase::ALL, i.episode_over, Done),
        (&[Done], true, Done),
        (&[MoveToGoal, Hold], i.dropped, Recover),
        (&[Recover], i.regrasp_ready, MoveToPregrasp),
        (&[MoveToPregrasp], i.at_pregrasp, CloseGrasp),
        (&[CloseGrasp], i.grasp_acquired, MoveToGoal),
        (&[MoveToGoal], i.goal_reached, Hold),
        (&[Hold], i.goal_switched, MoveToGoal),
    ];
    rows.iter()
        .find(|(from, cond, _)| *cond && from.contains(&phase))
        .map_or(phase, |r| r.2)
}
