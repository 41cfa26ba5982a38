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
//! Goal sequences and linear subgoal interpolation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Vec3;

/// Default distance at which a subgoal counts as reached, m.
pub const DEFAULT_SUBGOAL_TOL: f64 = 0.015;
/// Default number of control steps before a stuck subgoal is skipped.
pub const DEFAULT_SUBGOAL_TIMEOUT: usize = 150;
/// Default number of interpolated subgoals per goal.
pub const DEFAULT_INTERP_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalEntry {
    /// Time at which this goal becomes active, s.
    pub t_activate: f64,
    /// Target cube center position, m.
    pub goal: Vec3,
}

/// Ordered goal sequence. Entry `k` is active from its `t_activate` until the
/// next entry activates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalTrajectory {
    pub entries: Vec<GoalEntry>,
}

impl GoalTrajectory {
    /// Builds a trajectory, checking ordering and that every goal lies inside
    /// the arena cylinder above the floor.
    pub fn new(entries: Vec<GoalEntry>, arena_radius: f64, floor_z: f64) -> Result<Self> {
        let t = Self { entries };
        t.validate(arena_radius, floor_z)?;
        Ok(t)
    }

    pub fn validate(&self, arena_radius: f64, floor_z: f64) -> Result<()> {
        let first = self
            .entries
            .first()
            .ok_or_else(|| Error::invalid("goal trajectory is empty"))?;
        if first.t_activate != 0.0 {
            return Err(Error::invalid("first goal must activate at t = 0"));
        }
        for (k, e) in self.entries.iter().enumerate() {
            if !e.t_activate.is_finite() || !e.goal.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("goal {k} has non-finite values")));
            }
            if k > 0 && !(e.t_activate > self.entries[k - 1].t_activate) {
                return Err(Error::invalid(format!(
                    "goal {k}: t_activate must be strictly increasing"
                )));
            }
            if e.goal.xy().norm() > arena_radius || e.goal.z < floor_z {
                return Err(Error::invalid(format!("goal {k} lies outside the arena")));
            }
        }
        Ok(())
    }

    /// Index of the entry with the largest `t_activate <= t`.
    pub fn active_index(&self, t: f64) -> usize {
        self.entries
            .partition_point(|e| e.t_activate <= t)
            .saturating_sub(1)
    }

    pub fn active_goal(&self, t: f64) -> Vec3 {
        self.entries[self.active_index(t)].goal
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a JSON array of `{"t_activate": .., "goal": [x, y, z]}` records.
    pub fn load(path: &Path, arena_radius: f64, floor_z: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let traj: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        traj.validate(arena_radius, floor_z)?;
        Ok(traj)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }
}

/// `n` equidistant points from `start` (excluded) to `end` (included).
///
/// The last point is `end` itself, so `n = 1` is a direct jump to the goal.
pub fn interpolate_linear(start: &Vec3, end: &Vec3, n: usize) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::invalid("interpolation needs n >= 1"));
    }
    let delta = end - start;
    let mut points: Vec<Vec3> = (1..n)
        .map(|k| start + delta * (k as f64 / n as f64))
        .collect();
    points.push(*end);
    Ok(points)
}

/// Interpolated subgoals toward one trajectory goal, plus progress tracking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub subgoals: Vec<Vec3>,
    /// Index of the subgoal being pursued; equals `subgoals.len()` once the
    /// last one has been reached.
    pub cursor: usize,
    pub source_goal: Vec3,
    /// Control steps spent on the current subgoal.
    pub steps_on_subgoal: usize,
}

/// Result of [`WaypointPlan::advance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advance {
    pub active: Vec3,
    pub advanced: bool,
}

impl WaypointPlan {
    pub fn new(cube_pos: &Vec3, goal: &Vec3, n: usize) -> Result<Self> {
        Ok(Self {
            subgoals: interpolate_linear(cube_pos, goal, n)?,
            cursor: 0,
            source_goal: *goal,
            steps_on_subgoal: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.subgoals.len()
    }

    pub fn active_subgoal(&self) -> Vec3 {
        self.subgoals[self.cursor.min(self.n() - 1)]
    }

    /// True once the final subgoal is the one being pursued (or passed).
    pub fn on_final(&self) -> bool {
        self.cursor + 1 >= self.n()
    }

    /// Counts one control step and moves to the next subgoal when the cube is
    /// within `tol` of the current one, or after `timeout_steps` steps on it.
    pub fn advance(&mut self, cube_pos: &Vec3, tol: f64, timeout_steps: usize) -> Advance {
        let mut advanced = false;
        if self.cursor < self.n() {
            self.steps_on_subgoal += 1;
            let near = (cube_pos - self.subgoals[self.cursor]).norm() <= tol;
            if near || self.steps_on_subgoal >= timeout_steps {
                self.cursor += 1;
                self.steps_on_subgoal = 0;
                advanced = true;
            }
        }
        Advance {
            active: self.active_subgoal(),
            advanced,
        }
    }
}

/// Plan toward `goal` starting from `cube_pos`.
pub fn make_plan(cube_pos: &Vec3, goal: &Vec3, n: usize) -> Result<WaypointPlan> {
    WaypointPlan::new(cube_pos, goal, n)
}
