//! Mirror-symmetric gridworlds with optional symmetry-breaking knobs.
//!
//! States are the cells `row * width + col` followed by one absorbing state
//! that goal cells lead into. Actions are left, right, up, down. The group
//! is `D_1`: its flip maps column `c` to `width - 1 - c` and swaps left
//! and right.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::groups::FiniteGroup;
use crate::mdp::{FiniteMdp, MdpSymmetry};
use crate::scalar::Scalar;
use crate::signalconv::GroupSignal;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const UP: usize = 2;
pub const DOWN: usize = 3;
pub const N_ACTIONS: usize = 4;
pub const ACTION_NAMES: [&str; N_ACTIONS] = ["left", "right", "up", "down"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub fn action(self) -> usize {
        match self {
            Direction::Left => LEFT,
            Direction::Right => RIGHT,
            Direction::Up => UP,
            Direction::Down => DOWN,
        }
    }
}

/// How the mirror symmetry is broken. Regions are lists of `(row, col)` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymmetryBreak {
    None,
    /// Moves starting in the region are applied twice.
    RepeatAction {
        region: Vec<(usize, usize)>,
    },
    /// Left and right swap meaning for moves starting in the region.
    ReflectAction {
        region: Vec<(usize, usize)>,
    },
    /// `magnitude` of the transition mass is moved to `direction` everywhere.
    Bias {
        direction: Direction,
        magnitude: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridworldConfig {
    /// Odd, so the mirror axis is a column.
    pub width: usize,
    pub n_rows: usize,
    /// Must be closed under the mirror.
    pub goals: Vec<(usize, usize)>,
    pub step_reward: f64,
    pub goal_reward: f64,
    /// Probability of a uniformly random direction instead of the intended one.
    pub slip: f64,
    pub symmetry_break: SymmetryBreak,
    pub gamma: f64,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self {
            width: 5,
            n_rows: 4,
            goals: vec![(0, 0), (0, 4)],
            step_reward: -0.1,
            goal_reward: 1.0,
            slip: 0.1,
            symmetry_break: SymmetryBreak::None,
            gamma: 0.9,
        }
    }
}

impl GridworldConfig {
    pub fn n_cells(&self) -> usize {
        self.width * self.n_rows
    }

    /// Index of the absorbing state.
    pub fn absorbing(&self) -> usize {
        self.n_cells()
    }

    pub fn n_states(&self) -> usize {
        self.n_cells() + 1
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn mirror_cell(&self, s: usize) -> usize {
        if s == self.absorbing() {
            return s;
        }
        let (r, c) = (s / self.width, s % self.width);
        self.cell(r, self.width - 1 - c)
    }

    fn check_cells(&self, cells: &[(usize, usize)], what: &str) -> Result<()> {
        for &(r, c) in cells {
            if r >= self.n_rows || c >= self.width {
                return invalid(format!("{what} cell ({r}, {c}) lies outside the {}x{} grid", self.n_rows, self.width));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width % 2 == 0 {
            return invalid(format!("width must be odd, got {}", self.width));
        }
        if self.n_rows == 0 {
            return invalid("need at least one row");
        }
        if !(0.0..1.0).contains(&self.slip) {
            return invalid(format!("slip must lie in [0, 1), got {}", self.slip));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return invalid(format!("discount must lie in (0, 1), got {}", self.gamma));
        }
        if !self.step_reward.is_finite() || !self.goal_reward.is_finite() {
            return invalid("rewards must be finite");
        }
        self.check_cells(&self.goals, "goal")?;
        for &(r, c) in &self.goals {
            if !self.goals.contains(&(r, self.width - 1 - c)) {
                return invalid(format!("goal set is not mirror-symmetric: ({r}, {c}) has no mirror image"));
            }
        }
        match &self.symmetry_break {
            SymmetryBreak::None => {}
            SymmetryBreak::RepeatAction { region } | SymmetryBreak::ReflectAction { region } => {
                if region.is_empty() {
                    return invalid("symmetry-breaking region is empty");
                }
                self.check_cells(region, "region")?;
            }
            SymmetryBreak::Bias { magnitude, .. } => {
                if !(*magnitude >= 0.0) || self.slip + magnitude > 1.0 {
                    return invalid(format!("bias magnitude {magnitude} must be >= 0 with slip + magnitude <= 1"));
                }
            }
        }
        Ok(())
    }

    fn step(&self, s: usize, dir: usize) -> usize {
        let (r, c) = (s / self.width, s % self.width);
        match dir {
            LEFT if c > 0 => s - 1,
            RIGHT if c + 1 < self.width => s + 1,
            UP if r > 0 => s - self.width,
            DOWN if r + 1 < self.n_rows => s + self.width,
            _ => s,
        }
    }
}

fn in_region(cfg: &GridworldConfig, s: usize, region: &[(usize, usize)]) -> bool {
    region.iter().any(|&(r, c)| cfg.cell(r, c) == s)
}

/// Builds the MDP and its `D_1` mirror symmetry.
pub fn build_gridworld<T: Scalar>(cfg: &GridworldConfig) -> Result<(FiniteMdp<T>, MdpSymmetry)> {
    cfg.validate()?;
    let ns = cfg.n_states();
    let na = N_ACTIONS;
    let absorbing = cfg.absorbing();
    let is_goal = |s: usize| cfg.goals.iter().any(|&(r, c)| cfg.cell(r, c) == s);
    let mut reward = vec![0.0; ns * na];
    let mut trans = vec![0.0; ns * na * ns];

    for s in 0..ns {
        for a in 0..na {
            let row = &mut trans[(s * na + a) * ns..(s * na + a + 1) * ns];
            if s == absorbing || is_goal(s) {
                row[absorbing] = 1.0;
                reward[s * na + a] = if s == absorbing { 0.0 } else { cfg.goal_reward };
                continue;
            }
            reward[s * na + a] = cfg.step_reward;
            let (repeats, intended) = match &cfg.symmetry_break {
                SymmetryBreak::RepeatAction { region } if in_region(cfg, s, region) => (2, a),
                SymmetryBreak::ReflectAction { region } if in_region(cfg, s, region) => (
                    1,
                    match a {
                        LEFT => RIGHT,
                        RIGHT => LEFT,
                        other => other,
                    },
                ),
                _ => (1, a),
            };
            let land = |dir: usize| (0..repeats).fold(s, |x, _| cfg.step(x, dir));
            let mut stay_mass = 1.0 - cfg.slip;
            if let SymmetryBreak::Bias { direction, magnitude } = cfg.symmetry_break {
                stay_mass -= magnitude;
                row[land(direction.action())] += magnitude;
            }
            row[land(intended)] += stay_mass;
            for dir in 0..na {
                row[land(dir)] += cfg.slip / na as f64;
            }
        }
    }

    let m = FiniteMdp::new(
        ns,
        na,
        reward.into_iter().map(T::lit).collect(),
        trans.into_iter().map(T::lit).collect(),
        T::lit(cfg.gamma),
    )?;
    let coords = (0..ns)
        .map(|s| {
            if s == absorbing {
                // off-grid point on the mirror axis, so the metric stays symmetric
                vec![T::lit(-1.0), T::lit((cfg.width as f64 - 1.0) / 2.0)]
            } else {
                vec![T::from_usize_lossy(s / cfg.width), T::from_usize_lossy(s % cfg.width)]
            }
        })
        .collect();
    let m = m.with_state_coords(coords)?;
    let d1 = Arc::new(FiniteGroup::from_tag("d1")?);
    let state_perm = vec![(0..ns).collect(), (0..ns).map(|s| cfg.mirror_cell(s)).collect()];
    let action_perm = vec![vec![LEFT, RIGHT, UP, DOWN], vec![RIGHT, LEFT, UP, DOWN]];
    let sym = MdpSymmetry::new(d1, state_perm, action_perm)?;
    Ok((m, sym))
}

/// Encodes state `s` as a signal on the group: channel `c` at element `h` is
/// `1` iff `c = h^{-1} . s`. Then `encode(g . s) = g . encode(s)` exactly.
pub fn encode_state_signal<T: Scalar>(sym: &MdpSymmetry, s: usize) -> Result<GroupSignal<T>> {
    let ns = sym.n_states();
    if s >= ns {
        return invalid(format!("state {s} out of range for {ns} states"));
    }
    let group = sym.group().clone();
    let mut values = vec![T::zero(); group.order() * ns];
    for h in group.elements() {
        values[h * ns + sym.state(group.inv(h), s)] = T::one();
    }
    GroupSignal::new(group, ns, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::regular_representation;
    use crate::mdp::{reward_gap, transition_gap, IpmSpec};
    use crate::signalconv::act_on_signal;

    fn one_row(sb: SymmetryBreak) -> GridworldConfig {
        GridworldConfig {
            width: 3,
            n_rows: 1,
            goals: vec![],
            step_reward: 0.0,
            goal_reward: 1.0,
            slip: 0.0,
            symmetry_break: sb,
            gamma: 0.9,
        }
    }

    #[test]
    fn symmetric_world_has_zero_gaps() {
        let (m, sym) = build_gridworld::<f64>(&GridworldConfig::default()).unwrap();
        assert_eq!(reward_gap(&m, &sym).unwrap(), 0.0);
        assert_eq!(transition_gap(&m, &sym, &IpmSpec::TotalVariation).unwrap(), 0.0);
        let k = IpmSpec::euclidean(m.state_coords().unwrap()).unwrap();
        assert!(transition_gap(&m, &sym, &k).unwrap() < 1e-12);
    }

    #[test]
    fn bias_right_on_one_row() {
        let cfg = one_row(SymmetryBreak::Bias { direction: Direction::Right, magnitude: 0.1 });
        let (m, sym) = build_gridworld::<f64>(&cfg).unwrap();
        let tv = transition_gap(&m, &sym, &IpmSpec::TotalVariation).unwrap();
        assert!((tv - 0.1).abs() < 1e-12);
        let up = one_row(SymmetryBreak::Bias { direction: Direction::Up, magnitude: 0.1 });
        let (m, sym) = build_gridworld::<f64>(&up).unwrap();
        assert_eq!(transition_gap(&m, &sym, &IpmSpec::TotalVariation).unwrap(), 0.0);
    }

    #[test]
    fn reflect_breaks_only_transitions() {
        let cfg = GridworldConfig {
            symmetry_break: SymmetryBreak::ReflectAction { region: vec![(1, 0), (2, 1)] },
            ..Default::default()
        };
        let (m, sym) = build_gridworld::<f64>(&cfg).unwrap();
        assert_eq!(reward_gap(&m, &sym).unwrap(), 0.0);
        assert!(transition_gap(&m, &sym, &IpmSpec::TotalVariation).unwrap() > 0.0);
    }

    #[test]
    fn repeat_on_symmetric_region_keeps_symmetry() {
        let cfg = GridworldConfig {
            symmetry_break: SymmetryBreak::RepeatAction { region: vec![(2, 1), (2, 3)] },
            ..Default::default()
        };
        let (m, sym) = build_gridworld::<f64>(&cfg).unwrap();
        assert_eq!(transition_gap(&m, &sym, &IpmSpec::TotalVariation).unwrap(), 0.0);
        let lopsided = GridworldConfig {
            symmetry_break: SymmetryBreak::RepeatAction { region: vec![(2, 1)] },
            ..Default::default()
        };
        let (m, sym) = build_gridworld::<f64>(&lopsided).unwrap();
        assert!(transition_gap(&m, &sym, &IpmSpec::TotalVariation).unwrap() > 0.0);
    }

    #[test]
    fn invalid_configs() {
        assert!(build_gridworld::<f64>(&GridworldConfig { width: 4, ..Default::default() }).is_err());
        assert!(build_gridworld::<f64>(&GridworldConfig { goals: vec![(0, 0)], ..Default::default() }).is_err());
        let bad_region = GridworldConfig {
            symmetry_break: SymmetryBreak::ReflectAction { region: vec![(9, 0)] },
            ..Default::default()
        };
        assert!(build_gridworld::<f64>(&bad_region).is_err());
        let too_much = GridworldConfig {
            slip: 0.5,
            symmetry_break: SymmetryBreak::Bias { direction: Direction::Left, magnitude: 0.6 },
            ..Default::default()
        };
        assert!(build_gridworld::<f64>(&too_much).is_err());
    }

    #[test]
    fn bias_gap_is_monotone() {
        let mut last = 0.0;
        for k in 0..=10 {
            let cfg = GridworldConfig {
                symmetry_break: SymmetryBreak::Bias { direction: Direction::Right, magnitude: 0.05 * k as f64 },
                ..Default::default()
            };
            let (m, sym) = build_gridworld::<f64>(&cfg).unwrap();
            let e = transition_gap(&m, &sym, &IpmSpec::TotalVariation).unwrap();
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn encoding_is_equivariant() {
        let (_, sym) = build_gridworld::<f64>(&GridworldConfig::default()).unwrap();
        let rep = regular_representation::<f64>(sym.group());
        for s in 0..sym.n_states() {
            let z = encode_state_signal::<f64>(&sym, s).unwrap();
            for g in sym.group().elements() {
                let gz = act_on_signal(&rep, g, &z).unwrap();
                assert_eq!(gz, encode_state_signal(&sym, sym.state(g, s)).unwrap());
                let back = act_on_signal(&rep, sym.group().inv(g), &gz).unwrap();
                assert_eq!(back, z);
            }
        }
        // the middle column is fixed by the mirror
        let z = encode_state_signal::<f64>(&sym, 2).unwrap();
        assert_eq!(z.fiber(0), z.fiber(1));
    }
}
