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
//! TOML run configuration.
//!
//! A run config is an [`EpisodeConfig`] written as TOML. Every key is
//! optional; omitted keys take their defaults. Example:
//!
//! ```toml
//! grasp = "triangle"      # or "chuck"
//! interp_n = 20
//! duration = 120.0
//! seed = 7
//!
//! [goals]
//! source = "generated"    # or "file" (with `path`) or "inline" (with `entries`)
//! goal_count = 5
//! z_range = [0.0325, 0.1]
//!
//! [gains]
//! kp = [25.0, 25.0, 25.0]
//!
//! [sim]
//! eps_slip = 0.02
//! ```
//!
//! The `[chain]` table holds the manipulator geometry (`fingers`, `gravity`);
//! [`save_config`] writes a complete file to start from.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::KinematicChain;
use crate::statemachine::EpisodeConfig;

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        Error::Parse {
            path: origin.to_owned(),
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

/// Parses and validates a run config. `origin` only labels errors.
pub fn parse_config(text: &str, origin: &Path) -> Result<EpisodeConfig> {
    let config: EpisodeConfig = parse_toml(text, origin)?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<EpisodeConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

pub fn config_to_toml(config: &EpisodeConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::invalid(format!("config serialization: {e}")))
}

pub fn save_config(config: &EpisodeConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config_to_toml(config)?).map_err(|e| Error::io(path, e))
}

/// Loads a standalone chain definition (the contents of a `[chain]` table).
pub fn load_chain(path: &Path) -> Result<KinematicChain> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let chain: KinematicChain = parse_toml(&text, path)?;
    chain.validate()?;
    Ok(chain)
}
