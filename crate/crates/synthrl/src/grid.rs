//! Deterministic labeled grid environment with the seven crafting tasks.
//!
//! The agent occupies one cell and moves left/right/up/down; moves blocked
//! by the boundary or a river cell leave the position unchanged. Entering a
//! labeled cell emits that cell's label. A task is a required label
//! sequence with arbitrary gaps; the extrinsic reward of 1 arrives exactly
//! once, on the step whose emitted label completes the sequence.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::trace::{label, Label};

pub const DEFAULT_MAP: &str = include_str!("../assets/default_map.txt");
pub const DEFAULT_STEP_BUDGET: u32 = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("map parse error: {0}")]
    MapParseError(String),
    #[error("position ({0}, {1}) is outside the grid")]
    InvalidPosition(i64, i64),
    #[error("episode is already finished")]
    EpisodeFinished,
    #[error("unknown task id {0}, expected 1..=7")]
    UnknownTask(u32),
}

pub type Pos = (u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Left,
    Right,
    Up,
    Down,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Left, Action::Right, Action::Up, Action::Down];

    pub fn index(self) -> usize {
        match self {
            Action::Left => 0,
            Action::Right => 1,
            Action::Up => 2,
            Action::Down => 3,
        }
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    pub width: u32,
    pub height: u32,
    pub cell_labels: BTreeMap<Pos, Label>,
    pub obstacles: BTreeSet<Pos>,
    pub start: Pos,
    pub step_budget: u32,
}

impl GridWorld {
    /// The bundled 10x10 crafting map.
    pub fn default_map() -> GridWorld {
        load_map(DEFAULT_MAP).expect("bundled map parses")
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height
    }

    pub fn num_cells(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn cell_index(&self, pos: Pos) -> usize {
        (pos.1 * self.width + pos.0) as usize
    }

    /// Cells reachable from the start by legal moves.
    pub fn reachable_cells(&self) -> BTreeSet<Pos> {
        let mut seen = BTreeSet::from([self.start]);
        let mut queue = VecDeque::from([self.start]);
        while let Some(pos) = queue.pop_front() {
            for a in Action::ALL {
                let next = self.move_from(pos, a);
                if next != pos && seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// Destination of one move, clamped by the boundary and obstacles.
    pub fn move_from(&self, (x, y): Pos, action: Action) -> Pos {
        let (dx, dy) = match action {
            Action::Left => (-1i64, 0i64),
            Action::Right => (1, 0),
            Action::Up => (0, -1),
            Action::Down => (0, 1),
        };
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if !self.in_bounds(nx, ny) || self.obstacles.contains(&(nx as u32, ny as u32)) {
            (x, y)
        } else {
            (nx as u32, ny as u32)
        }
    }
}

/// Pure lookup of the cell label.
pub fn labeling(world: &GridWorld, pos: (i64, i64)) -> Result<Option<Label>, GridError> {
    if !world.in_bounds(pos.0, pos.1) {
        return Err(GridError::InvalidPosition(pos.0, pos.1));
    }
    Ok(world.cell_labels.get(&(pos.0 as u32, pos.1 as u32)).cloned())
}

/// ASCII map: one row per line, `W`ood `G`rass `I`ron `C`rafttable
/// `S`mithtable `D` gold, `~` river, `.` empty, `@` start.
pub fn load_map(text: &str) -> Result<GridWorld, GridError> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.is_empty() {
        return Err(GridError::MapParseError("empty map".into()));
    }
    let width = rows[0].chars().count() as u32;
    let mut world = GridWorld {
        width,
        height: rows.len() as u32,
        cell_labels: BTreeMap::new(),
        obstacles: BTreeSet::new(),
        start: (0, 0),
        step_budget: DEFAULT_STEP_BUDGET,
    };
    let mut start = None;
    for (y, row) in rows.iter().enumerate() {
        if row.chars().count() as u32 != width {
            return Err(GridError::MapParseError(format!(
                "row {} has {} cells, expected {width}",
                y + 1,
                row.chars().count()
            )));
        }
        for (x, ch) in row.chars().enumerate() {
            let pos = (x as u32, y as u32);
            match ch {
                '.' => {}
                '~' => {
                    world.obstacles.insert(pos);
                }
                '@' => {
                    if start.replace(pos).is_some() {
                        return Err(GridError::MapParseError("multiple start cells".into()));
                    }
                }
                'W' => {
                    world.cell_labels.insert(pos, label("wood"));
                }
                'G' => {
                    world.cell_labels.insert(pos, label("grass"));
                }
                'I' => {
                    world.cell_labels.insert(pos, label("iron"));
                }
                'C' => {
                    world.cell_labels.insert(pos, label("crafttable"));
                }
                'S' => {
                    world.cell_labels.insert(pos, label("smithtable"));
                }
                'D' => {
                    world.cell_labels.insert(pos, label("gold"));
                }
                other => {
                    return Err(GridError::MapParseError(format!(
                        "unknown cell '{other}' at ({x}, {y})"
                    )));
                }
            }
        }
    }
    world.start = start.ok_or_else(|| GridError::MapParseError("missing start cell '@'".into()))?;
    Ok(world)
}

/// A crafting task: the required high-level label sequence, matched with
/// arbitrary gaps, and the reward granted on completion.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: u32,
    pub required_sequence: Vec<Label>,
    pub extrinsic_reward: f64,
}

impl TaskSpec {
    pub fn standard(id: u32) -> Result<TaskSpec, GridError> {
        let seq: &[&str] = match id {
            1 => &["wood", "crafttable"],
            2 => &["grass", "crafttable"],
            3 => &["wood", "grass", "iron", "crafttable"],
            4 => &["wood", "smithtable"],
            5 => &["grass", "smithtable"],
            6 => &["iron", "wood", "smithtable"],
            7 => &["wood", "iron", "crafttable", "gold"],
            other => return Err(GridError::UnknownTask(other)),
        };
        Ok(TaskSpec {
            id,
            required_sequence: seq.iter().map(|s| label(s)).collect(),
            extrinsic_reward: 1.0,
        })
    }

    /// True when the required sequence occurs within `history` in order,
    /// with arbitrary labels in between.
    pub fn matches(&self, history: &[Label]) -> bool {
        let mut need = self.required_sequence.iter();
        let mut next = need.next();
        for l in history {
            if Some(l) == next {
                next = need.next();
            }
        }
        next.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeState {
    pub position: Pos,
    pub history: Vec<Label>,
    pub done: bool,
    pub step_count: u32,
    /// Number of leading task labels already matched.
    progress: usize,
}

impl EpisodeState {
    pub fn start(world: &GridWorld) -> EpisodeState {
        EpisodeState {
            position: world.start,
            history: Vec::new(),
            done: false,
            step_count: 0,
            progress: 0,
        }
    }
}

/// One environment step. Returns the new state, the emitted label (if the
/// landing cell is labeled) and the extrinsic reward, which is nonzero
/// exactly on the completing step.
pub fn step(
    world: &GridWorld,
    task: &TaskSpec,
    state: &EpisodeState,
    action: Action,
) -> Result<(EpisodeState, Option<Label>, f64), GridError> {
    if state.done {
        return Err(GridError::EpisodeFinished);
    }
    let mut next = state.clone();
    next.position = world.move_from(state.position, action);
    next.step_count += 1;
    let emitted = world.cell_labels.get(&next.position).cloned();
    let mut reward = 0.0;
    if let Some(l) = &emitted {
        next.history.push(l.clone());
        if next.progress < task.required_sequence.len()
            && *l == task.required_sequence[next.progress]
        {
            next.progress += 1;
            if next.progress == task.required_sequence.len() {
                reward = task.extrinsic_reward;
                next.done = true;
            }
        }
    }
    if next.step_count >= world.step_budget {
        next.done = true;
    }
    Ok((next, emitted, reward))
}
