//! Gridworld layouts as data.
//!
//! ```text
//! name tiny
//! observe rooms
//! max_steps 100
//! goal_reward 100
//! label 1 Room1
//! layout
//! S 1|1
//! -
//! 1 1 G
//! end
//! ```
//!
//! Inside `layout`, lines alternate between cell rows and wall rows. Cells
//! sit on even columns; an odd column holding `|` blocks the move between its
//! neighbours, and a `-` under a cell in a wall row blocks the move down from
//! it. Glyphs: `.` floor, `#` solid, `S` start, `G` goal, `T` toggle, digits
//! floor in that room. Optional `rooms` and `slip` blocks give one digit per
//! cell (slip digits are tenths).

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::model::{Distribution, Mdp, Pomdp};
use crate::symbol::{symbols, Symbol};

pub type Cell = (usize, usize);

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("layout has no {0} cell")]
    Missing(&'static str),
    #[error("cell {0:?} lies outside the {1}x{2} grid")]
    OutOfBounds(Cell, usize, usize),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("model construction failed: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observe {
    /// Room label of the current cell.
    Rooms,
    /// Only whether the last move hit a wall, plus toggle and goal cells.
    Bumps,
}

const DIRECTIONS: [(&str, isize, isize); 4] = [("up", 0, -1), ("down", 0, 1), ("left", -1, 0), ("right", 1, 0)];

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub solid: BTreeSet<Cell>,
    /// Blocked neighbour pairs, stored with the smaller cell first.
    pub walls: BTreeSet<(Cell, Cell)>,
    pub room_of: BTreeMap<Cell, u8>,
    pub room_labels: BTreeMap<u8, String>,
    pub slip_prob: BTreeMap<Cell, f64>,
    pub start: Cell,
    pub goal: Cell,
    pub toggle: Option<Cell>,
    /// Pull-down probability before the toggle is visited.
    pub gravity: f64,
    pub observe: Observe,
    pub max_steps: usize,
    pub goal_reward: f64,
}

/// Ground-truth state of a compiled grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub cell: Cell,
    pub bumped: bool,
    pub toggled: bool,
}

fn wall_key(a: Cell, b: Cell) -> (Cell, Cell) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self, GridError> {
        Parser::default().run(text)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        for c in [self.start, self.goal].into_iter().chain(self.toggle) {
            if c.0 >= self.width || c.1 >= self.height {
                return Err(GridError::OutOfBounds(c, self.width, self.height));
            }
        }
        for &p in self.slip_prob.values().chain(std::iter::once(&self.gravity)) {
            if !(0.0..=1.0).contains(&p) {
                return Err(GridError::BadProbability(p));
            }
        }
        Ok(())
    }

    pub fn actions(&self) -> Vec<Symbol> {
        symbols(&DIRECTIONS.map(|d| d.0))
    }

    fn neighbour(&self, c: Cell, dir: usize) -> Option<Cell> {
        let (_, dx, dy) = DIRECTIONS[dir];
        let x = c.0.checked_add_signed(dx)?;
        let y = c.1.checked_add_signed(dy)?;
        let n = (x, y);
        let open =
            x < self.width && y < self.height && !self.solid.contains(&n) && !self.walls.contains(&wall_key(c, n));
        open.then_some(n)
    }

    fn moved(&self, s: GridState, dir: usize) -> GridState {
        let (cell, bumped) = match self.neighbour(s.cell, dir) {
            Some(n) => (n, false),
            None => (s.cell, self.observe == Observe::Bumps),
        };
        GridState { cell, bumped, toggled: s.toggled || Some(cell) == self.toggle }
    }

    /// Successor distribution of `s` under direction `dir`.
    pub fn successors(&self, s: GridState, dir: usize) -> Vec<(GridState, f64)> {
        if s.cell == self.goal {
            return vec![(s, 1.0)];
        }
        let mut out = Vec::new();
        let pull = if s.toggled { 0.0 } else { self.gravity };
        let below = self.neighbour(s.cell, 1);
        let pull = if below.is_some() { pull } else { 0.0 };
        if pull > 0.0 {
            out.push((self.moved(s, 1), pull));
        }
        let act = 1.0 - pull;
        let slip = self.slip_prob.get(&s.cell).copied().unwrap_or(0.0);
        let perpendicular: [usize; 2] = if dir < 2 { [2, 3] } else { [0, 1] };
        out.push((self.moved(s, dir), act * (1.0 - slip)));
        if slip > 0.0 {
            for p in perpendicular {
                out.push((self.moved(s, p), act * slip / 2.0));
            }
        }
        out.retain(|&(_, p)| p > 0.0);
        out
    }

    pub fn observation(&self, s: GridState) -> String {
        match self.observe {
            Observe::Rooms if s.cell == self.goal => "goal".to_string(),
            Observe::Rooms => {
                let room = self.room_of.get(&s.cell).copied().unwrap_or(0);
                self.room_labels.get(&room).cloned().unwrap_or_else(|| format!("Room{room}"))
            }
            Observe::Bumps if s.cell == self.goal => "cookie".to_string(),
            Observe::Bumps if Some(s.cell) == self.toggle => "toggle".to_string(),
            Observe::Bumps if s.bumped => "wall".to_string(),
            Observe::Bumps => "neutral".to_string(),
        }
    }

    /// Enumerates reachable states breadth-first from the start; ids follow
    /// discovery order.
    pub fn reachable_states(&self) -> Vec<GridState> {
        let start = GridState { cell: self.start, bumped: false, toggled: Some(self.start) == self.toggle };
        let mut seen: HashMap<GridState, usize> = HashMap::from([(start, 0)]);
        let mut order = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for dir in 0..DIRECTIONS.len() {
                for (t, _) in self.successors(s, dir) {
                    if let Entry::Vacant(v) = seen.entry(t) {
                        v.insert(order.len());
                        order.push(t);
                        queue.push_back(t);
                    }
                }
            }
        }
        order
    }

    pub fn compile(&self) -> Result<(Pomdp, Vec<GridState>), GridError> {
        self.validate()?;
        let states = self.reachable_states();
        let index: HashMap<GridState, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let delta = states
            .iter()
            .map(|&s| {
                (0..DIRECTIONS.len())
                    .map(|d| {
                        Distribution::new(self.successors(s, d).into_iter().map(|(t, p)| (index[&t], p)).collect())
                    })
                    .collect()
            })
            .collect();
        let model_err = |e: crate::model::ModelError| GridError::Model(e.to_string());
        let mdp = Mdp::new(0, self.actions(), delta).map_err(model_err)?;
        let obs = states.iter().map(|&s| Symbol::new(&self.observation(s))).collect();
        let reward = states.iter().map(|s| if s.cell == self.goal { self.goal_reward } else { 0.0 }).collect();
        let goals: BTreeSet<usize> = (0..states.len()).filter(|&i| states[i].cell == self.goal).collect();
        Ok((Pomdp::new(mdp, obs, reward, &goals).map_err(model_err)?, states))
    }
}

#[derive(Default)]
struct Parser {
    name: Option<String>,
    observe: Option<Observe>,
    max_steps: Option<usize>,
    goal_reward: Option<f64>,
    gravity: Option<f64>,
    labels: BTreeMap<u8, String>,
    layout: Vec<(usize, String)>,
    rooms: Vec<(usize, String)>,
    slip: Vec<(usize, String)>,
}

fn perr(line: usize, msg: impl Into<String>) -> GridError {
    GridError::Parse { line, msg: msg.into() }
}

impl Parser {
    fn run(mut self, text: &str) -> Result<GridSpec, GridError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        while let Some((no, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let (key, value) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let value = value.trim();
            let parse_f = |v: &str| v.parse::<f64>().map_err(|_| perr(no, format!("bad number {v:?}")));
            match key {
                "name" => self.name = Some(value.to_string()),
                "observe" => {
                    self.observe = Some(match value {
                        "rooms" => Observe::Rooms,
                        "bumps" => Observe::Bumps,
                        _ => return Err(perr(no, format!("unknown observe mode {value:?}"))),
                    })
                }
                "max_steps" => self.max_steps = Some(value.parse().map_err(|_| perr(no, "bad max_steps"))?),
                "goal_reward" => self.goal_reward = Some(parse_f(value)?),
                "gravity" => self.gravity = Some(parse_f(value)?),
                "label" => {
                    let (digit, label) =
                        value.split_once(char::is_whitespace).ok_or_else(|| perr(no, "label needs digit and name"))?;
                    let d = digit.parse::<u8>().map_err(|_| perr(no, "label digit"))?;
                    self.labels.insert(d, label.trim().to_string());
                }
                "layout" | "rooms" | "slip" => {
                    let mut block = Vec::new();
                    loop {
                        match lines.next() {
                            Some((_, l)) if l.trim() == "end" => break,
                            Some((n, l)) => block.push((n, l.trim_end().to_string())),
                            None => return Err(perr(no, format!("unterminated {key} block"))),
                        }
                    }
                    match key {
                        "layout" => self.layout = block,
                        "rooms" => self.rooms = block,
                        _ => self.slip = block,
                    }
                }
                _ => return Err(perr(no, format!("unknown key {key:?}"))),
            }
        }
        self.finish()
    }

    fn finish(self) -> Result<GridSpec, GridError> {
        let cell_rows: Vec<&(usize, String)> = self.layout.iter().step_by(2).collect();
        let height = cell_rows.len();
        if height == 0 {
            return Err(GridError::Missing("layout"));
        }
        let width = cell_rows.iter().map(|(_, r)| r.len().div_ceil(2)).max().unwrap_or(0);
        let mut spec = GridSpec {
            name: self.name.unwrap_or_else(|| "grid".to_string()),
            width,
            height,
            solid: BTreeSet::new(),
            walls: BTreeSet::new(),
            room_of: BTreeMap::new(),
            room_labels: self.labels,
            slip_prob: BTreeMap::new(),
            start: (0, 0),
            goal: (0, 0),
            toggle: None,
            gravity: self.gravity.unwrap_or(0.0),
            observe: self.observe.unwrap_or(Observe::Rooms),
            max_steps: self.max_steps.unwrap_or(100),
            goal_reward: self.goal_reward.unwrap_or(100.0),
        };
        let (mut start, mut goal) = (None, None);
        for (i, (no, row)) in self.layout.iter().enumerate() {
            let y = i / 2;
            let chars: Vec<char> = row.chars().collect();
            if i % 2 == 1 {
                for (col, &ch) in chars.iter().enumerate() {
                    match ch {
                        '-' if col % 2 == 0 => {
                            spec.walls.insert(wall_key((col / 2, y), (col / 2, y + 1)));
                        }
                        ' ' | '+' | '-' => {}
                        _ => return Err(perr(*no, format!("unexpected {ch:?} in wall row"))),
                    }
                }
                continue;
            }
            for x in 0..width {
                let cell = (x, y);
                let glyph = chars.get(2 * x).copied().unwrap_or('#');
                match glyph {
                    '.' => {}
                    '#' => {
                        spec.solid.insert(cell);
                    }
                    'S' => start = Some(cell),
                    'G' => goal = Some(cell),
                    'T' => spec.toggle = Some(cell),
                    d if d.is_ascii_digit() => {
                        spec.room_of.insert(cell, d as u8 - b'0');
                    }
                    other => return Err(perr(*no, format!("unknown glyph {other:?}"))),
                }
                match chars.get(2 * x + 1) {
                    Some('|') => {
                        spec.walls.insert(wall_key(cell, (x + 1, y)));
                    }
                    Some(' ') | None => {}
                    Some(other) => return Err(perr(*no, format!("unexpected {other:?} between cells"))),
                }
            }
        }
        spec.start = start.ok_or(GridError::Missing("start"))?;
        spec.goal = goal.ok_or(GridError::Missing("goal"))?;
        for (y, (no, row)) in self.rooms.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let d = ch.to_digit(10).ok_or_else(|| perr(*no, format!("room digit expected, got {ch:?}")))?;
                spec.room_of.insert((x, y), d as u8);
            }
        }
        for (y, (no, row)) in self.slip.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let d = ch.to_digit(10).ok_or_else(|| perr(*no, format!("slip digit expected, got {ch:?}")))?;
                if d > 0 {
                    spec.slip_prob.insert((x, y), d as f64 / 10.0);
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "\
name tiny
observe bumps
layout
S .|G
-
. . .
end
";

    #[test]
    fn parses_walls() {
        let g = GridSpec::parse(TINY).unwrap();
        assert_eq!((g.width, g.height), (3, 2));
        assert!(g.walls.contains(&((1, 0), (2, 0))));
        assert!(g.walls.contains(&((0, 0), (0, 1))));
        assert_eq!(g.goal, (2, 0));
    }

    #[test]
    fn blocked_move_bumps() {
        let g = GridSpec::parse(TINY).unwrap();
        let s = GridState { cell: (0, 0), bumped: false, toggled: false };
        let succ = g.successors(s, 1);
        assert_eq!(succ, vec![(GridState { cell: (0, 0), bumped: true, toggled: false }, 1.0)]);
        assert_eq!(g.observation(succ[0].0), "wall");
    }

    #[test]
    fn slip_splits_perpendicular() {
        let mut g = GridSpec::parse(TINY).unwrap();
        g.slip_prob.insert((1, 1), 0.2);
        let s = GridState { cell: (1, 1), bumped: false, toggled: false };
        let succ = g.successors(s, 0);
        let total: f64 = succ.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(succ.len(), 3);
        assert!((succ[1].1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn compiled_goal_is_absorbing() {
        let (pomdp, states) = GridSpec::parse(TINY).unwrap().compile().unwrap();
        let g = states.iter().position(|s| s.cell == (2, 0)).unwrap();
        assert!(pomdp.is_goal(g));
        assert_eq!(pomdp.obs(g).as_str(), "cookie");
        for a in 0..4 {
            assert_eq!(pomdp.mdp().transition(g, a).prob(g), 1.0);
        }
    }

    #[test]
    fn missing_start_is_reported() {
        assert_eq!(GridSpec::parse("layout\n. G\nend\n").unwrap_err(), GridError::Missing("start"));
        assert!(GridSpec::parse("layout\nS x\nend\n").is_err());
        assert!(GridSpec::parse("layout\nS G\n").is_err());
    }
}
