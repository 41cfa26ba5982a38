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
//! Reward, batch statistics, goal generation and episode logs.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Vec3;
use crate::sim::EventKind;
use crate::statemachine::Phase;
use crate::trajectory::{GoalEntry, GoalTrajectory};

/// Normalizers for the horizontal and vertical distance terms of the reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardRanges {
    pub range_xy: f64,
    pub range_z: f64,
}

impl Default for RewardRanges {
    fn default() -> Self {
        Self {
            range_xy: 0.39,
            range_z: 0.27,
        }
    }
}

impl RewardRanges {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_xy > 0.0 && self.range_z > 0.0) {
            return Err(Error::config("reward", "range_xy and range_z must be > 0"));
        }
        Ok(())
    }
}

/// Negative scaled distance from the cube to the goal:
/// `-(|d_xy| / range_xy) - (|d_z| / range_z)`.
pub fn reward(cube_pos: &Vec3, goal: &Vec3, ranges: &RewardRanges) -> f64 {
    let d = cube_pos - goal;
    -(d.xy().norm() / ranges.range_xy) - (d.z.abs() / ranges.range_z)
}

/// Per-step log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u64,
    pub t: f64,
    pub phase: Phase,
    pub cube: Vec3,
    pub goal: Vec3,
    pub subgoal: Vec3,
    pub reward: f64,
    pub error_norms: [f64; 3],
    /// Largest per-finger change in Cartesian error since the previous step.
    pub error_jump: f64,
    /// Largest commanded fingertip speed.
    pub cmd_speed: f64,
    pub slip_residual: f64,
    pub attached: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventKind>,
}

/// First line of every log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub seed: u64,
    /// SHA-256 of the canonical JSON of the episode configuration.
    pub config_hash: String,
    pub grasp: String,
    pub interp_n: usize,
    pub dt: f64,
    pub duration: f64,
    pub goals: GoalTrajectory,
}

pub const LOG_FORMAT: &str = "trifinger-cpc-episode/1";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub records: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header(LogHeader),
    Step(StepRecord),
}

impl EpisodeLog {
    pub fn cumulative_reward(&self) -> f64 {
        cumulative_reward(&self.records)
    }

    pub fn drop_count(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| &r.events)
            .filter(|e| matches!(e, EventKind::CubeDropped { .. }))
            .count()
    }

    /// Phases in order of entry, consecutive repeats collapsed.
    pub fn phase_sequence(&self) -> Vec<Phase> {
        let mut seq: Vec<Phase> = Vec::new();
        for r in &self.records {
            if seq.last() != Some(&r.phase) {
                seq.push(r.phase);
            }
        }
        seq
    }

    /// Writes one JSON object per line: the header, then every step.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = |l: &LogLine| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, l)?;
            out.write_all(b"\n")
        };
        line(&LogLine::Header(self.header.clone()))?;
        for r in &self.records {
            line(&LogLine::Step(r.clone()))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn parse<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: origin.to_owned(),
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            match parsed {
                LogLine::Header(h) if header.is_none() && records.is_empty() => header = Some(h),
                LogLine::Header(_) => {
                    return Err(Error::Parse {
                        path: origin.to_owned(),
                        line: i + 1,
                        column: 1,
                        message: "unexpected second header".into(),
                    })
                }
                LogLine::Step(r) => records.push(r),
            }
        }
        let header = header.ok_or_else(|| Error::Parse {
            path: origin.to_owned(),
            line: 1,
            column: 1,
            message: "missing header record".into(),
        })?;
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(file), path)
    }
}

/// Sum of per-step rewards.
pub fn cumulative_reward(records: &[StepRecord]) -> f64 {
    records.iter().map(|r| r.reward).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation (divisor n).
    pub stddev: f64,
    pub drops: usize,
    pub episodes: usize,
}

/// Mean, median and population standard deviation of episode returns.
pub fn summarize(cumulative_rewards: &[f64]) -> Result<SummaryStats> {
    summarize_with_drops(cumulative_rewards, 0)
}

pub fn summarize_with_drops(cumulative_rewards: &[f64], drops: usize) -> Result<SummaryStats> {
    let n = cumulative_rewards.len();
    if n == 0 {
        return Err(Error::invalid("cannot summarize an empty list"));
    }
    if !cumulative_rewards.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite episode reward"));
    }
    let mean = cumulative_rewards.iter().sum::<f64>() / n as f64;
    let var = cumulative_rewards.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let mut sorted = cumulative_rewards.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(SummaryStats {
        mean,
        median,
        stddev: var.sqrt(),
        drops,
        episodes: n,
    })
}

/// Parameters for [`generate_goal_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSampler {
    pub goal_count: usize,
    /// Seconds each goal stays active.
    pub dwell: f64,
    pub arena_radius: f64,
    /// Inclusive range of goal heights (cube center z).
    pub z_range: [f64; 2],
}

/// Horizontal goals drawn uniformly on the disc of radius 0.8 * arena radius.
pub const GOAL_DISC_FRACTION: f64 = 0.8;

/// Seeded random goal sequence; goal `k` activates at `k * dwell`.
pub fn generate_goal_trajectory(seed: u64, sampler: &GoalSampler) -> Result<GoalTrajectory> {
    if sampler.goal_count == 0 {
        return Err(Error::invalid("goal_count must be >= 1"));
    }
    if !(sampler.dwell > 0.0) || !(sampler.z_range[0] <= sampler.z_range[1]) {
        return Err(Error::invalid("dwell must be > 0 and z_range ordered"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_max = GOAL_DISC_FRACTION * sampler.arena_radius;
    let entries = (0..sampler.goal_count)
        .map(|k| {
            // Uniform on the disc: sqrt-distributed radius.
            let r = r_max * rng.gen::<f64>().sqrt();
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let [z_lo, z_hi] = sampler.z_range;
            let z = if z_hi > z_lo { rng.gen_range(z_lo..=z_hi) } else { z_lo };
            GoalEntry {
                t_activate: k as f64 * sampler.dwell,
                goal: Vec3::new(r * theta.cos(), r * theta.sin(), z),
            }
        })
        .collect();
    GoalTrajectory::new(entries, sampler.arena_radius, 0.0)
}
