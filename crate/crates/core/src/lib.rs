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
//! Cartesian position control, grasp planning and waypoint interpolation for a
//! three-finger manipulator moving a cube through a sequence of goals, run in a
//! deterministic simulated world.

pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod eval;
pub mod grasp;
pub mod kinematics;
pub mod sim;
pub mod statemachine;
pub mod trajectory;

pub use error::{Error, Result};
