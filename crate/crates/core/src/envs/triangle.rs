use crate::error::Result;
use crate::mg_core::{FiniteMG, Layout, ObservationMap, Outcome};

pub const POSITIONS: [&str; 3] = ["L", "M", "R"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Up,
    Down,
}

impl Shape {
    fn glyph(self) -> &'static str {
        match self {
            Self::Up => "△",
            Self::Down => "▽",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
}

/// Shared reward of the three-agent triangle game. With an even number of
/// up-triangles the team scores when agents behind △ move up and agents
/// behind ▽ move down; with an odd number the required moves are swapped.
pub fn triangle_reward(shapes: [Shape; 3], moves: [Move; 3]) -> f64 {
    let ups = shapes.iter().filter(|&&s| s == Shape::Up).count();
    let even = ups % 2 == 0;
    let all_match = shapes.iter().zip(&moves).all(|(&s, &m)| {
        let wants_up = (s == Shape::Up) == even;
        (m == Move::Up) == wants_up
    });
    if all_match {
        1.0
    } else {
        0.0
    }
}

/// Local state labels: six (position, shape) pairs then `done`.
fn local_labels() -> Vec<String> {
    let mut v = Vec::new();
    for p in POSITIONS {
        for s in [Shape::Up, Shape::Down] {
            v.push(format!("{p}{}", s.glyph()));
        }
    }
    v.push("done".into());
    v
}

const DONE: usize = 6;

fn decode_local(k: usize) -> (usize, Shape) {
    (k / 2, if k % 2 == 0 { Shape::Up } else { Shape::Down })
}

/// A state is valid when no agent is done and positions are distinct.
fn valid(locals: &[usize]) -> bool {
    if locals.iter().any(|&k| k == DONE) {
        return false;
    }
    let mut seen = [false; 3];
    for &k in locals {
        let (p, _) = decode_local(k);
        if seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// The three-agent, one-step triangle game: local state (position, shape),
/// actions {↑, ↓}, uniform initial distribution over the 48 valid states.
pub fn triangle_game() -> Result<FiniteMG> {
    let states = local_labels();
    let layout = Layout {
        local_states: vec![states; 3],
        local_actions: vec![vec!["↑".to_string(), "↓".to_string()]; 3],
    };
    let mut initial = Vec::new();
    for a in 0..DONE {
        for b in 0..DONE {
            for c in 0..DONE {
                if valid(&[a, b, c]) {
                    initial.push((vec![a, b, c], 1.0 / 48.0));
                }
            }
        }
    }
    FiniteMG::tabulate(
        layout,
        1.0,
        &initial,
        |s| s.iter().all(|&k| k == DONE),
        |s, a| {
            let r = if valid(s) {
                let shapes = [0, 1, 2].map(|i| decode_local(s[i]).1);
                let moves = [0, 1, 2].map(|i| if a[i] == 0 { Move::Up } else { Move::Down });
                triangle_reward(shapes, moves)
            } else {
                0.0
            };
            Outcome {
                next: vec![(vec![DONE; 3], 1.0)],
                rewards: vec![r; 3],
            }
        },
    )
}

/// Each agent sees its own position and the three shapes read clockwise
/// (L → M → R → L) starting from the one in front of it. States outside the
/// valid set are labelled by the agent's own local state plus the sorted
/// multiset of the others'.
pub fn triangle_observations(mg: &FiniteMG) -> Result<ObservationMap> {
    let labels = local_labels();
    ObservationMap::tabulate(mg, false, |i, s| {
        if valid(s) {
            let mut by_pos = [Shape::Up; 3];
            for &k in s {
                let (p, sh) = decode_local(k);
                by_pos[p] = sh;
            }
            let (own, _) = decode_local(s[i]);
            let seq: String = (0..3).map(|d| by_pos[(own + d) % 3].glyph()).collect();
            format!("{}:{seq}", POSITIONS[own])
        } else {
            let mut others: Vec<&str> = s
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &k)| labels[k].as_str())
                .collect();
            others.sort_unstable();
            format!("{}|{}", labels[s[i]], others.join(","))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Move as Mv;
    use Shape::{Down as D, Up as U};

    #[test]
    fn parity_rule() {
        assert_eq!(triangle_reward([U, D, U], [Mv::Up, Mv::Down, Mv::Up]), 1.0);
        assert_eq!(triangle_reward([U, U, U], [Mv::Down, Mv::Down, Mv::Down]), 1.0);
        assert_eq!(triangle_reward([U, D, D], [Mv::Up, Mv::Up, Mv::Up]), 0.0);
        // odd count: △ down, ▽ up
        assert_eq!(triangle_reward([U, D, D], [Mv::Down, Mv::Up, Mv::Up]), 1.0);
        // zero △ is even: everyone behind ▽ goes down
        assert_eq!(triangle_reward([D, D, D], [Mv::Down, Mv::Down, Mv::Down]), 1.0);
    }

    #[test]
    fn game_shape() {
        let g = triangle_game().unwrap();
        assert_eq!(g.n_states(), 343);
        assert_eq!(g.n_joint_actions(), 8);
        assert_eq!(g.initial_support().len(), 48);
        assert!(g.is_one_step());
        // one agent per position in every reachable state
        for s in g.reachable_states() {
            assert!(valid(&g.decode_state(s)));
        }
    }

    #[test]
    fn observation_reads_clockwise_from_front() {
        let g = triangle_game().unwrap();
        let obs = triangle_observations(&g).unwrap();
        // agent 0 at L with △, agent 1 at M with ▽, agent 2 at R with △
        let s = g.encode_state(&[0, 3, 4]).unwrap();
        assert_eq!(obs.label(0, s), "L:△▽△");
        assert_eq!(obs.label(1, s), "M:▽△△");
        assert_eq!(obs.label(2, s), "R:△△▽");
    }
}
