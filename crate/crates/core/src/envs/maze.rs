//! Square grid maze with a hidden target.
//!
//! Boards are generated by randomized Prim growth over cells: a wall cell
//! is opened when exactly one of its four neighbours is already open. The
//! outer ring is always wall, and any wall cell with no wall among its eight
//! neighbours is filled back in so that no isolated pillar-free holes remain.
//!
//! The agent sees the 3x3 patch around itself (wall = 1, open = 0). Reaching
//! the target pays +10 and respawns the agent on a uniformly drawn open cell
//! other than the target. Moving into a wall leaves the agent in place.
//! Episodes always last exactly the horizon.

use std::collections::VecDeque;
use std::fmt;

use crate::numcore::rng::{derive_seed, rng_from_seed, uniform_index, Rng};

use super::{EnvError, StepInfo, StepResult};

pub const TARGET_REWARD: f64 = 10.0;
pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_SIZE: usize = 8;
pub const MIN_SIZE: usize = 4;
pub const GENERATION_ATTEMPTS: u64 = 16;

/// Grid moves in action-index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn from_index(action: usize) -> Result<Self, EnvError> {
        Self::ALL.get(action).copied().ok_or(EnvError::InvalidAction { action, num_actions: 4 })
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MazeInstance {
    pub size: usize,
    /// Row-major, `true` for wall.
    pub walls: Vec<bool>,
    pub target: (usize, usize),
    pub agent: (usize, usize),
    pub horizon: usize,
    pub steps_elapsed: usize,
    pub done: bool,
    rng: Rng,
}

fn neighbours4(size: usize, (r, c): (usize, usize)) -> impl Iterator<Item = (usize, usize)> {
    Direction::ALL.into_iter().filter_map(move |d| {
        let (dr, dc) = d.delta();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        (nr >= 0 && nc >= 0 && (nr as usize) < size && (nc as usize) < size).then_some((nr as usize, nc as usize))
    })
}

fn is_interior(size: usize, (r, c): (usize, usize)) -> bool {
    r > 0 && c > 0 && r + 1 < size && c + 1 < size
}

/// Prim growth plus the fill rule. Returns the wall mask.
fn grow_walls(size: usize, rng: &mut Rng) -> Vec<bool> {
    let idx = |(r, c): (usize, usize)| r * size + c;
    let mut walls = vec![true; size * size];
    let inner = size - 2;
    let start = (1 + uniform_index(rng, inner), 1 + uniform_index(rng, inner));
    walls[idx(start)] = false;
    let mut frontier: Vec<(usize, usize)> = neighbours4(size, start).filter(|&p| is_interior(size, p)).collect();
    while !frontier.is_empty() {
        let cell = frontier.swap_remove(uniform_index(rng, frontier.len()));
        if !walls[idx(cell)] {
            continue;
        }
        let open = neighbours4(size, cell).filter(|&p| !walls[idx(p)]).count();
        if open != 1 {
            continue;
        }
        walls[idx(cell)] = false;
        frontier.extend(neighbours4(size, cell).filter(|&p| is_interior(size, p) && walls[idx(p)]));
    }
    // Fill: a wall-free 8-neighbourhood means an open blob; close its centre.
    let snapshot = walls.clone();
    for r in 1..size - 1 {
        for c in 1..size - 1 {
            if snapshot[idx((r, c))] {
                continue;
            }
            let any_wall = (r - 1..=r + 1)
                .flat_map(|rr| (c - 1..=c + 1).map(move |cc| (rr, cc)))
                .any(|p| p != (r, c) && snapshot[idx(p)]);
            if !any_wall {
                walls[idx((r, c))] = true;
            }
        }
    }
    walls
}

impl MazeInstance {
    /// Builds a board for `(seed, size)`. Degenerate draws are retried on
    /// derived seeds a bounded number of times.
    pub fn generate(seed: u64, size: usize, horizon: usize) -> Result<Self, EnvError> {
        if size < MIN_SIZE {
            return Err(EnvError::MazeTooSmall { size, min: MIN_SIZE });
        }
        for attempt in 0..GENERATION_ATTEMPTS {
            let mut rng = rng_from_seed(derive_seed(seed, &[size as u64, attempt]));
            let walls = grow_walls(size, &mut rng);
            let free: Vec<(usize, usize)> =
                (0..size * size).filter(|&i| !walls[i]).map(|i| (i / size, i % size)).collect();
            if free.len() < 2 || !connected(size, &walls) {
                continue;
            }
            let target = free[uniform_index(&mut rng, free.len())];
            let mut maze = Self { size, walls, target, agent: target, horizon, steps_elapsed: 0, done: false, rng };
            maze.agent = maze.draw_spawn();
            return Ok(maze);
        }
        Err(EnvError::DegenerateMaze { seed, size, attempts: GENERATION_ATTEMPTS })
    }

    pub fn is_wall(&self, (r, c): (usize, usize)) -> bool {
        self.walls[r * self.size + c]
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.size * self.size)
            .filter(|&i| !self.walls[i])
            .map(|i| (i / self.size, i % self.size))
            .collect()
    }

    fn draw_spawn(&mut self) -> (usize, usize) {
        let candidates: Vec<_> = self.free_cells().into_iter().filter(|&p| p != self.target).collect();
        candidates[uniform_index(&mut self.rng, candidates.len())]
    }

    /// 3x3 patch around the agent, row-major. Cells off the board read as wall.
    pub fn observation(&self) -> Vec<f64> {
        let (r, c) = self.agent;
        let mut obs = Vec::with_capacity(9);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                let inside = rr >= 0 && cc >= 0 && (rr as usize) < self.size && (cc as usize) < self.size;
                let wall = !inside || self.is_wall((rr as usize, cc as usize));
                obs.push(if wall { 1.0 } else { 0.0 });
            }
        }
        obs
    }

    pub fn step(&mut self, dir: Direction) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let (dr, dc) = dir.delta();
        let next = ((self.agent.0 as isize + dr) as usize, (self.agent.1 as isize + dc) as usize);
        if !self.is_wall(next) {
            self.agent = next;
        }
        self.steps_elapsed += 1;
        let mut info = StepInfo::default();
        let mut reward = 0.0;
        if self.agent == self.target {
            reward = TARGET_REWARD;
            info.goal = true;
            info.respawned = true;
            self.agent = self.draw_spawn();
        }
        info.position = self.agent;
        self.done = self.steps_elapsed >= self.horizon;
        Ok(StepResult { observation: self.observation(), reward, done: self.done, truncated: self.done, info })
    }

    /// Rebuilds an instance from its text rendering. `seed` drives respawns.
    pub fn from_text(text: &str, seed: u64, horizon: usize) -> Result<Self, EnvError> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let size = rows.len();
        if size < MIN_SIZE {
            return Err(EnvError::MazeTooSmall { size, min: MIN_SIZE });
        }
        let mut walls = Vec::with_capacity(size * size);
        let (mut target, mut agent) = (None, None);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != size {
                return Err(EnvError::Parse(format!("maze row {r} has {} cells, expected {size}", row.chars().count())));
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'T' => {
                        walls.push(false);
                        target = Some((r, c));
                    }
                    'A' => {
                        walls.push(false);
                        agent = Some((r, c));
                    }
                    other => return Err(EnvError::Parse(format!("unexpected maze character {other:?}"))),
                }
            }
        }
        let target = target.ok_or_else(|| EnvError::Parse("maze has no target".into()))?;
        let agent = agent.ok_or_else(|| EnvError::Parse("maze has no agent".into()))?;
        Ok(Self { size, walls, target, agent, horizon, steps_elapsed: 0, done: false, rng: rng_from_seed(seed) })
    }

    /// Shortest path length in moves between two open cells.
    pub fn distance(&self, from: (usize, usize), to: (usize, usize)) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.size * self.size];
        let mut queue = VecDeque::from([from]);
        dist[from.0 * self.size + from.1] = 0;
        while let Some(p) = queue.pop_front() {
            let d = dist[p.0 * self.size + p.1];
            if p == to {
                return Some(d);
            }
            for q in neighbours4(self.size, p) {
                let qi = q.0 * self.size + q.1;
                if !self.walls[qi] && dist[qi] == usize::MAX {
                    dist[qi] = d + 1;
                    queue.push_back(q);
                }
            }
        }
        None
    }
}

fn connected(size: usize, walls: &[bool]) -> bool {
    let free: Vec<usize> = (0..walls.len()).filter(|&i| !walls[i]).collect();
    let Some(&first) = free.first() else { return true };
    let mut seen = vec![false; walls.len()];
    let mut queue = VecDeque::from([(first / size, first % size)]);
    seen[first] = true;
    let mut count = 1;
    while let Some(p) = queue.pop_front() {
        for q in neighbours4(size, p) {
            let qi = q.0 * size + q.1;
            if !walls[qi] && !seen[qi] {
                seen[qi] = true;
                count += 1;
                queue.push_back(q);
            }
        }
    }
    count == free.len()
}

impl fmt::Display for MazeInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.size {
            let row: String = (0..self.size)
                .map(|c| match (r, c) {
                    p if p == self.agent => 'A',
                    p if p == self.target => 'T',
                    p if self.is_wall(p) => '#',
                    _ => '.',
                })
                .collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boards_are_reproducible_and_size_dependent() {
        let a = MazeInstance::generate(11, 8, 100).unwrap();
        let b = MazeInstance::generate(11, 8, 100).unwrap();
        assert_eq!(a.to_string(), b.to_string());
        let c = MazeInstance::generate(11, 10, 100).unwrap();
        assert_eq!(c.size, 10);
        assert_ne!(a.walls, c.walls[..64].to_vec());
    }

    #[test]
    fn boundary_is_wall_and_free_cells_connected() {
        for seed in 0..300 {
            let m = MazeInstance::generate(seed, 8, 100).unwrap();
            for i in 0..8 {
                assert!(m.is_wall((0, i)) && m.is_wall((7, i)) && m.is_wall((i, 0)) && m.is_wall((i, 7)));
            }
            assert!(connected(8, &m.walls));
            assert!(!m.is_wall(m.target) && !m.is_wall(m.agent));
            assert_ne!(m.agent, m.target);
        }
    }

    #[test]
    fn no_open_cell_is_surrounded_by_open_cells() {
        for seed in 0..100 {
            let m = MazeInstance::generate(seed, 10, 100).unwrap();
            for r in 1..9 {
                for c in 1..9 {
                    if m.is_wall((r, c)) {
                        continue;
                    }
                    let walls = (r - 1..=r + 1).flat_map(|rr| (c - 1..=c + 1).map(move |cc| (rr, cc))).filter(|&p| m.is_wall(p)).count();
                    assert!(walls > 0, "seed {seed} cell {r},{c}");
                }
            }
        }
    }

    #[test]
    fn blocked_move_is_noop_with_zero_reward() {
        let text = "######\n#A..T#\n#.####\n#....#\n#....#\n######\n";
        let mut m = MazeInstance::from_text(text, 0, 100).unwrap();
        let s = m.step(Direction::Up).unwrap();
        assert_eq!(m.agent, (1, 1));
        assert_eq!(s.reward, 0.0);
        assert_eq!(m.steps_elapsed, 1);
    }

    #[test]
    fn reaching_target_pays_and_respawns() {
        let text = "######\n#A..T#\n#.####\n#....#\n#....#\n######\n";
        let mut m = MazeInstance::from_text(text, 0, 100).unwrap();
        m.step(Direction::Right).unwrap();
        m.step(Direction::Right).unwrap();
        let s = m.step(Direction::Right).unwrap();
        assert_eq!(s.reward, TARGET_REWARD);
        assert!(s.info.goal && s.info.respawned);
        assert_ne!(m.agent, m.target);
        assert!(!m.is_wall(m.agent));
    }

    #[test]
    fn observation_patch() {
        let text = "######\n#A..T#\n#.####\n#....#\n#....#\n######\n";
        let m = MazeInstance::from_text(text, 0, 100).unwrap();
        assert_eq!(m.observation(), vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn episode_lasts_horizon() {
        let mut m = MazeInstance::generate(3, 8, 100).unwrap();
        let mut n = 0;
        while !m.done {
            m.step(Direction::ALL[n % 4]).unwrap();
            n += 1;
        }
        assert_eq!(n, 100);
        assert_eq!(m.step(Direction::Up).unwrap_err(), EnvError::EpisodeDone);
    }

    #[test]
    fn text_roundtrip() {
        let m = MazeInstance::generate(5, 8, 100).unwrap();
        let text = m.to_string();
        let back = MazeInstance::from_text(&text, 5, 100).unwrap();
        assert_eq!(back.to_string(), text);
        assert_eq!(back.walls, m.walls);
    }

    #[test]
    fn bad_text_is_rejected() {
        assert!(MazeInstance::from_text("####\n#A.#\n#..#\n####\n", 0, 10).is_err());
        assert!(MazeInstance::from_text("####\n#AT#\n#x.#\n####\n", 0, 10).is_err());
        assert!(MazeInstance::from_text("###\n#AT\n###\n", 0, 10).is_err());
    }

    #[test]
    fn too_small_is_error() {
        assert!(matches!(MazeInstance::generate(0, 3, 10), Err(EnvError::MazeTooSmall { .. })));
    }
}
