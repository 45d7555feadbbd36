//! Deterministic clone of the empty n-by-n gridworld with egocentric partial
//! observations.
//!
//! The outer ring of cells is wall. The agent starts at (1, 1) facing east,
//! the goal sits at (n-2, n-2), and an episode lasts at most `4 * n * n`
//! steps. Reaching the goal ends the episode with reward
//! `1 - 0.9 * steps / max_steps`; running out of steps ends it with reward 0.
//!
//! Observations are the 7x7 window in front of the agent (agent at the
//! bottom-center cell), three channels per cell (object, color, state codes
//! mirroring the public MiniGrid convention), flattened row-major and divided
//! by 10 so every entry lies in [0, 1].

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// 7 x 7 cells x 3 channels.
pub const OBS_LEN: usize = 147;
pub const VIEW_SIZE: i64 = 7;
/// turn left, turn right, move forward, pick up, drop, toggle.
pub const NUM_ACTIONS: usize = 6;

/// Object codes (channel 0) before normalization.
const CODE_UNSEEN: f64 = 0.0;
const CODE_EMPTY: f64 = 1.0;
const CODE_WALL: f64 = 2.0;
const CODE_GOAL: f64 = 8.0;
const CODE_AGENT: f64 = 10.0;
/// Color codes (channel 1): grey walls, green goal.
const COLOR_WALL: f64 = 5.0;
const COLOR_GOAL: f64 = 1.0;
const CHANNEL_SCALE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    East,
    South,
    West,
    North,
}

impl Dir {
    fn forward(self) -> (i64, i64) {
        match self {
            Dir::East => (1, 0),
            Dir::South => (0, 1),
            Dir::West => (-1, 0),
            Dir::North => (0, -1),
        }
    }

    /// Unit vector to the agent's right when facing `self`.
    fn right(self) -> (i64, i64) {
        self.turned_right().forward()
    }

    fn turned_right(self) -> Dir {
        match self {
            Dir::East => Dir::South,
            Dir::South => Dir::West,
            Dir::West => Dir::North,
            Dir::North => Dir::East,
        }
    }

    fn turned_left(self) -> Dir {
        self.turned_right().turned_right().turned_right()
    }

    fn code(self) -> f64 {
        match self {
            Dir::East => 0.0,
            Dir::South => 1.0,
            Dir::West => 2.0,
            Dir::North => 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEnv {
    n: usize,
    agent_pos: (i64, i64),
    agent_dir: Dir,
    goal_pos: (i64, i64),
    step_count: usize,
    max_steps: usize,
    done: bool,
}

impl GridEnv {
    /// Fresh environment plus its initial observation. The layout is fixed
    /// (non-random variant); the seed only tags the episode for provenance.
    pub fn reset(n: usize, _seed: u64) -> Result<(Self, Vec<f64>)> {
        if n != 5 && n != 6 {
            return Err(Error::Config(format!("unsupported grid size {}, expected 5 or 6", n)));
        }
        let env = Self {
            n,
            agent_pos: (1, 1),
            agent_dir: Dir::East,
            goal_pos: (n as i64 - 2, n as i64 - 2),
            step_count: 0,
            max_steps: 4 * n * n,
            done: false,
        };
        let obs = env.observation();
        Ok((env, obs))
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn agent_pos(&self) -> (i64, i64) {
        self.agent_pos
    }

    pub fn agent_dir(&self) -> Dir {
        self.agent_dir
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn in_grid(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.n as i64 && y < self.n as i64
    }

    fn is_wall(&self, x: i64, y: i64) -> bool {
        x == 0 || y == 0 || x == self.n as i64 - 1 || y == self.n as i64 - 1
    }

    /// Advance one step. Actions: 0 turn left, 1 turn right, 2 move forward
    /// (no-op into walls), 3..5 consume the step without effect.
    pub fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        if self.done {
            return Err(Error::State("step called on a finished episode".into()));
        }
        if action >= NUM_ACTIONS {
            return Err(Error::Argument(format!("action {} out of range 0..{}", action, NUM_ACTIONS)));
        }
        self.step_count += 1;
        match action {
            0 => self.agent_dir = self.agent_dir.turned_left(),
            1 => self.agent_dir = self.agent_dir.turned_right(),
            2 => {
                let (dx, dy) = self.agent_dir.forward();
                let (nx, ny) = (self.agent_pos.0 + dx, self.agent_pos.1 + dy);
                if !self.is_wall(nx, ny) {
                    self.agent_pos = (nx, ny);
                }
            }
            // pick up / drop / toggle: nothing to act on in an empty room
            _ => {}
        }

        let mut reward = 0.0;
        if self.agent_pos == self.goal_pos {
            self.done = true;
            reward = 1.0 - 0.9 * (self.step_count as f64 / self.max_steps as f64);
        } else if self.step_count >= self.max_steps {
            self.done = true;
        }
        Ok((self.observation(), reward, self.done))
    }

    /// Egocentric 7x7x3 view, a pure function of the environment state.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(OBS_LEN);
        let (fx, fy) = self.agent_dir.forward();
        let (rx, ry) = self.agent_dir.right();
        for vy in 0..VIEW_SIZE {
            for vx in 0..VIEW_SIZE {
                let depth = VIEW_SIZE - 1 - vy; // vy = 6 is the agent's row
                let lateral = vx - VIEW_SIZE / 2; // vx = 3 is straight ahead
                let wx = self.agent_pos.0 + fx * depth + rx * lateral;
                let wy = self.agent_pos.1 + fy * depth + ry * lateral;
                let (object, color, state) = if vy == VIEW_SIZE - 1 && vx == VIEW_SIZE / 2 {
                    (CODE_AGENT, 0.0, self.agent_dir.code())
                } else if !self.in_grid(wx, wy) {
                    (CODE_UNSEEN, 0.0, 0.0)
                } else if self.is_wall(wx, wy) {
                    (CODE_WALL, COLOR_WALL, 0.0)
                } else if (wx, wy) == self.goal_pos {
                    (CODE_GOAL, COLOR_GOAL, 0.0)
                } else {
                    (CODE_EMPTY, 0.0, 0.0)
                };
                obs.push(object / CHANNEL_SCALE);
                obs.push(color / CHANNEL_SCALE);
                obs.push(state / CHANNEL_SCALE);
            }
        }
        obs
    }
}

/// One step of a recorded episode, for the optional debug dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub step: usize,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
}

/// Write events as JSON lines.
pub fn dump_trajectory(path: &Path, events: &[TrajectoryEvent]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for event in events {
        let line = serde_json::to_string(event)
            .map_err(|e| Error::Format(format!("trajectory encode: {}", e)))?;
        writeln!(file, "{}", line)?;
    }
    Ok(())
}
