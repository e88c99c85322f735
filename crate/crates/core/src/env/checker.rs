//! Checker Jumping ("toads and frogs") on a one-dimensional board.
//!
//! `L` tokens start on the left and only move right; `R` tokens start on the
//! right and only move left. A token either slides into the adjacent empty
//! cell or jumps over exactly one opposing token into the empty cell behind
//! it. Jumped tokens stay on the board.

use std::fmt;

use super::grammar::{ParseError, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    LeftToken,
    RightToken,
    Empty,
}

impl Cell {
    fn symbol(self) -> char {
        match self {
            Cell::LeftToken => 'L',
            Cell::RightToken => 'R',
            Cell::Empty => '_',
        }
    }

    fn from_symbol(c: char) -> Option<Self> {
        match c {
            'L' => Some(Cell::LeftToken),
            'R' => Some(Cell::RightToken),
            '_' => Some(Cell::Empty),
            _ => None,
        }
    }

    fn direction(self) -> isize {
        match self {
            Cell::LeftToken => 1,
            Cell::RightToken => -1,
            Cell::Empty => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CheckerState {
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CheckerMove {
    Slide { from: usize, to: usize },
    Jump { from: usize, over: usize, to: usize },
}

impl fmt::Display for CheckerMove {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckerMove::Slide { from, to } => write!(f, "slide({from},{to})"),
            CheckerMove::Jump { from, over, to } => write!(f, "jump({from},{over},{to})"),
        }
    }
}

impl CheckerState {
    /// `n` left tokens, one gap, `n` right tokens.
    pub fn initial(n: usize) -> Self {
        let mut cells = vec![Cell::LeftToken; n];
        cells.push(Cell::Empty);
        cells.extend(std::iter::repeat_n(Cell::RightToken, n));
        Self { cells }
    }

    /// The mirrored arrangement of [`CheckerState::initial`].
    pub fn goal(n: usize) -> Self {
        let mut cells = vec![Cell::RightToken; n];
        cells.push(Cell::Empty);
        cells.extend(std::iter::repeat_n(Cell::LeftToken, n));
        Self { cells }
    }

    pub fn per_side(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::LeftToken).count()
    }

    pub fn check(&self) -> Result<(), String> {
        let lefts = self.cells.iter().filter(|c| **c == Cell::LeftToken).count();
        let rights = self.cells.iter().filter(|c| **c == Cell::RightToken).count();
        let empties = self.cells.len() - lefts - rights;
        if lefts != rights || empties != 1 {
            return Err(format!(
                "board must hold equal token counts and one empty cell (L={lefts}, R={rights}, empty={empties})"
            ));
        }
        Ok(())
    }
}

fn target(from: usize, dir: isize, dist: isize) -> Option<usize> {
    let t = from as isize + dir * dist;
    (t >= 0).then_some(t as usize)
}

pub fn step(state: &CheckerState, mv: &CheckerMove) -> Result<CheckerState, String> {
    let cells = &state.cells;
    let len = cells.len();
    let (from, to) = match *mv {
        CheckerMove::Slide { from, to } | CheckerMove::Jump { from, to, .. } => (from, to),
    };
    for c in [from, to] {
        if c >= len {
            return Err(format!("cell {c} is off the board"));
        }
    }
    let token = cells[from];
    if token == Cell::Empty {
        return Err(format!("cell {from} is empty"));
    }
    let dir = token.direction();
    let name = token.symbol();
    match *mv {
        CheckerMove::Slide { .. } => {
            if target(from, dir, 1) != Some(to) {
                let way = if dir > 0 { "right" } else { "left" };
                return Err(format!(
                    "token {name} at cell {from} can only slide one cell to the {way}"
                ));
            }
        }
        CheckerMove::Jump { over, .. } => {
            if target(from, dir, 1) != Some(over) || target(from, dir, 2) != Some(to) {
                let way = if dir > 0 { "right" } else { "left" };
                return Err(format!(
                    "token {name} at cell {from} can only jump two cells to the {way}"
                ));
            }
            let jumped = cells[over];
            if jumped == Cell::Empty || jumped == token {
                return Err(format!(
                    "jump from cell {from} must pass over an opposing token, but cell {over} holds {}",
                    jumped.symbol()
                ));
            }
        }
    }
    if cells[to] != Cell::Empty {
        return Err(format!("cell {to} is not empty"));
    }
    let mut next = state.clone();
    next.cells.swap(from, to);
    Ok(next)
}

pub fn legal(state: &CheckerState) -> Vec<CheckerMove> {
    let cells = &state.cells;
    let Some(gap) = cells.iter().position(|c| *c == Cell::Empty) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    // Only tokens within two cells of the gap can reach it.
    if gap >= 1 && cells[gap - 1] == Cell::LeftToken {
        out.push(CheckerMove::Slide { from: gap - 1, to: gap });
    }
    if gap + 1 < cells.len() && cells[gap + 1] == Cell::RightToken {
        out.push(CheckerMove::Slide { from: gap + 1, to: gap });
    }
    if gap >= 2 && cells[gap - 2] == Cell::LeftToken && cells[gap - 1] == Cell::RightToken {
        out.push(CheckerMove::Jump { from: gap - 2, over: gap - 1, to: gap });
    }
    if gap + 2 < cells.len() && cells[gap + 2] == Cell::RightToken && cells[gap + 1] == Cell::LeftToken {
        out.push(CheckerMove::Jump { from: gap + 2, over: gap + 1, to: gap });
    }
    out
}

pub fn universe(state: &CheckerState) -> Vec<CheckerMove> {
    let len = state.cells.len();
    let mut out = Vec::new();
    for from in 0..len {
        for to in [from.checked_sub(1), Some(from + 1)].into_iter().flatten() {
            if to < len {
                out.push(CheckerMove::Slide { from, to });
            }
        }
        if from + 2 < len {
            out.push(CheckerMove::Jump { from, over: from + 1, to: from + 2 });
        }
        if from >= 2 {
            out.push(CheckerMove::Jump { from, over: from - 1, to: from - 2 });
        }
    }
    out
}

pub fn parse(term: &Term) -> Result<CheckerMove, ParseError> {
    match term.op.as_str() {
        "slide" => {
            term.expect_arity(2)?;
            Ok(CheckerMove::Slide {
                from: term.atom(0)?.number("a cell index")?,
                to: term.atom(1)?.number("a cell index")?,
            })
        }
        "jump" => {
            term.expect_arity(3)?;
            Ok(CheckerMove::Jump {
                from: term.atom(0)?.number("a cell index")?,
                over: term.atom(1)?.number("a cell index")?,
                to: term.atom(2)?.number("a cell index")?,
            })
        }
        other => Err(ParseError::new(term.op_pos, "'slide' or 'jump'", format!("'{other}'"))),
    }
}

pub fn encode(state: &CheckerState) -> String {
    state.cells.iter().map(|c| c.symbol()).collect()
}

pub fn decode(text: &str) -> Result<CheckerState, String> {
    let cells = text
        .trim()
        .chars()
        .map(|c| Cell::from_symbol(c).ok_or_else(|| format!("bad cell symbol '{c}'")))
        .collect::<Result<Vec<_>, _>>()?;
    let state = CheckerState { cells };
    state.check()?;
    Ok(state)
}

pub fn render(state: &CheckerState) -> String {
    let cells: Vec<String> = state
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{i}:{}", c.symbol()))
        .collect();
    format!("board: [{}]", cells.join(" "))
}

/// Cells whose content differs from `goal`.
pub fn mismatched(state: &CheckerState, goal: &CheckerState) -> usize {
    state.cells.iter().zip(&goal.cells).filter(|(a, b)| a != b).count()
}
