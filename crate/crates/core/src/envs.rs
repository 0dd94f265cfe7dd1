//! Built-in environments, selectable by name.

use crate::error::{Error, Result};
use crate::model::SspModel;

pub const BUILTIN_NAMES: [&str; 3] = ["bandit-ssp", "chain", "gridworld-trap"];

/// Look up a built-in environment by name.
pub fn builtin_environment(name: &str) -> Result<SspModel> {
    match name {
        "bandit-ssp" => Ok(bandit_ssp()),
        "chain" => Ok(chain()),
        "gridworld-trap" => Ok(gridworld_trap()),
        _ => Err(Error::UnknownName {
            kind: "environment",
            name: name.to_string(),
            valid: BUILTIN_NAMES.join(", "),
        }),
    }
}

/// Three states, start 1.
///
/// At state 1, action 0 terminates with `c = g = 1`; action 1 terminates for
/// free w.p. 0.9 and moves to state 2 w.p. 0.1. State 2 has one action that
/// terminates with `c = 20`, `g = 0`. Under action 1 alone, `C ∈ {0, 20}`.
pub fn bandit_ssp() -> SspModel {
    SspModel {
        num_states: 3,
        actions: vec![1, 2, 1],
        transition: vec![
            vec![vec![1.0, 0.0, 0.0]],
            vec![vec![1.0, 0.0, 0.0], vec![0.9, 0.0, 0.1]],
            vec![vec![1.0, 0.0, 0.0]],
        ],
        cost_g: vec![vec![0.0], vec![1.0, 0.0], vec![0.0]],
        cost_c: vec![vec![0.0], vec![1.0, 0.0], vec![20.0]],
        start_state: 1,
        features: None,
    }
}

/// Random walk on states 1..=4 toward the terminal state, starting at 4.
///
/// Action 0 ("walk"): step toward 0 w.p. 0.7, away w.p. 0.3 (staying put at
/// state 4); `c = 1`, `g = 2`. Action 1 ("rush"): step toward 0 w.p. 0.9,
/// stay w.p. 0.1; `c = 3`, `g = 1`.
pub fn chain() -> SspModel {
    const N: usize = 5;
    let mut transition = vec![vec![unit(N, 0)]];
    let mut cost_g = vec![vec![0.0]];
    let mut cost_c = vec![vec![0.0]];
    for s in 1..N {
        let mut walk = vec![0.0; N];
        walk[s - 1] += 0.7;
        walk[(s + 1).min(N - 1)] += 0.3;
        let mut rush = vec![0.0; N];
        rush[s - 1] += 0.9;
        rush[s] += 0.1;
        transition.push(vec![walk, rush]);
        cost_g.push(vec![2.0, 1.0]);
        cost_c.push(vec![1.0, 3.0]);
    }
    SspModel {
        num_states: N,
        actions: std::iter::once(1).chain(std::iter::repeat_n(2, N - 1)).collect(),
        transition,
        cost_g,
        cost_c,
        start_state: N - 1,
        features: None,
    }
}

pub const GRID_SIDE: usize = 4;
/// Trap cell at row 1, column 2.
pub const GRID_TRAP: usize = cell(1, 2);
pub const GRID_GOAL: usize = cell(GRID_SIDE - 1, GRID_SIDE - 1);

/// State index of grid cell `(row, col)`; state 0 is the terminal state.
pub const fn cell(row: usize, col: usize) -> usize {
    1 + row * GRID_SIDE + col
}

/// 4×4 grid, start at the top-left cell, exit from the bottom-right cell.
///
/// Actions are 0 = right and 1 = down; the intended move happens w.p. 0.8,
/// the other one w.p. 0.2, and moves off the grid leave the agent in place.
/// Every step costs `c = 1` plus 10 in the trap cell; `g = 1` per step except
/// in the trap cell, where it is 0, so the objective is drawn to the trap.
pub fn gridworld_trap() -> SspModel {
    let n = GRID_SIDE * GRID_SIDE + 1;
    let mut transition = vec![vec![unit(n, 0)]];
    let mut cost_g = vec![vec![0.0]];
    let mut cost_c = vec![vec![0.0]];
    for row in 0..GRID_SIDE {
        for col in 0..GRID_SIDE {
            let s = cell(row, col);
            let right = if col + 1 < GRID_SIDE { cell(row, col + 1) } else { s };
            let down = if row + 1 < GRID_SIDE { cell(row + 1, col) } else { s };
            if s == GRID_GOAL {
                transition.push(vec![unit(n, 0), unit(n, 0)]);
            } else {
                let mut go_right = vec![0.0; n];
                go_right[right] += 0.8;
                go_right[down] += 0.2;
                let mut go_down = vec![0.0; n];
                go_down[down] += 0.8;
                go_down[right] += 0.2;
                transition.push(vec![go_right, go_down]);
            }
            let (g, c) = if s == GRID_TRAP { (0.0, 11.0) } else { (1.0, 1.0) };
            cost_g.push(vec![g, g]);
            cost_c.push(vec![c, c]);
        }
    }
    let mut actions = vec![2; n];
    actions[0] = 1;
    SspModel {
        num_states: n,
        actions,
        transition,
        cost_g,
        cost_c,
        start_state: cell(0, 0),
        features: None,
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
