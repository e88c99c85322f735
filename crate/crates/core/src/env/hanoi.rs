//! Tower of Hanoi with three pegs.

use std::fmt;

use super::grammar::{ParseError, Term};

pub const PEGS: usize = 3;

/// Three pegs, each listed bottom to top. Disk 1 is the smallest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HanoiState {
    pub pegs: [Vec<u32>; PEGS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HanoiMove {
    pub disk: u32,
    pub from: usize,
    pub to: usize,
}

impl fmt::Display for HanoiMove {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "move({},{},{})", self.disk, self.from, self.to)
    }
}

impl HanoiState {
    /// All `disks` stacked on `peg`.
    pub fn tower(disks: u32, peg: usize) -> Self {
        let mut pegs: [Vec<u32>; PEGS] = Default::default();
        pegs[peg] = (1..=disks).rev().collect();
        Self { pegs }
    }

    pub fn disk_count(&self) -> u32 {
        self.pegs.iter().map(|p| p.len() as u32).sum()
    }

    pub fn check(&self) -> Result<(), String> {
        let n = self.disk_count();
        let mut seen = vec![false; n as usize + 1];
        for (i, peg) in self.pegs.iter().enumerate() {
            for w in peg.windows(2) {
                if w[0] <= w[1] {
                    return Err(format!("peg {i} has disk {} above smaller disk {}", w[1], w[0]));
                }
            }
            for &d in peg {
                if d == 0 || d > n || seen[d as usize] {
                    return Err(format!("disk {d} is invalid or duplicated"));
                }
                seen[d as usize] = true;
            }
        }
        Ok(())
    }

    fn peg_of(&self, disk: u32) -> Option<usize> {
        self.pegs.iter().position(|p| p.contains(&disk))
    }
}

pub fn step(state: &HanoiState, mv: &HanoiMove) -> Result<HanoiState, String> {
    for peg in [mv.from, mv.to] {
        if peg >= PEGS {
            return Err(format!("peg {peg} does not exist"));
        }
    }
    if mv.from == mv.to {
        return Err(format!("source and target are both peg {}", mv.from));
    }
    if mv.disk == 0 || mv.disk > state.disk_count() {
        return Err(format!("disk {} does not exist", mv.disk));
    }
    let top = match state.pegs[mv.from].last() {
        Some(&d) => d,
        None => return Err(format!("peg {} is empty", mv.from)),
    };
    if top != mv.disk {
        return Err(format!("disk {} is not the top disk of peg {}", mv.disk, mv.from));
    }
    if let Some(&under) = state.pegs[mv.to].last() {
        if under < mv.disk {
            return Err(format!(
                "cannot place disk {} on smaller disk {} on peg {}",
                mv.disk, under, mv.to
            ));
        }
    }
    let mut next = state.clone();
    next.pegs[mv.from].pop();
    next.pegs[mv.to].push(mv.disk);
    Ok(next)
}

pub fn legal(state: &HanoiState) -> Vec<HanoiMove> {
    let mut out = Vec::new();
    for from in 0..PEGS {
        let Some(&disk) = state.pegs[from].last() else { continue };
        for to in 0..PEGS {
            if to == from {
                continue;
            }
            if state.pegs[to].last().is_none_or(|&t| t > disk) {
                out.push(HanoiMove { disk, from, to });
            }
        }
    }
    out
}

pub fn universe(state: &HanoiState) -> Vec<HanoiMove> {
    let mut out = Vec::new();
    for disk in 1..=state.disk_count() {
        for from in 0..PEGS {
            for to in 0..PEGS {
                if from != to {
                    out.push(HanoiMove { disk, from, to });
                }
            }
        }
    }
    out
}

pub fn parse(term: &Term) -> Result<HanoiMove, ParseError> {
    if term.op != "move" {
        return Err(ParseError::new(term.op_pos, "'move'", format!("'{}'", term.op)));
    }
    term.expect_arity(3)?;
    Ok(HanoiMove {
        disk: term.atom(0)?.number("a disk number")?,
        from: term.atom(1)?.number("a peg index")?,
        to: term.atom(2)?.number("a peg index")?,
    })
}

fn list(peg: &[u32]) -> String {
    let items: Vec<String> = peg.iter().map(|d| d.to_string()).collect();
    format!("[{}]", items.join(","))
}

pub fn render(state: &HanoiState) -> String {
    (0..PEGS)
        .map(|i| format!("peg{i}: {}", list(&state.pegs[i])))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn encode(state: &HanoiState) -> String {
    state.pegs.iter().map(|p| list(p)).collect::<Vec<_>>().join("|")
}

pub fn decode(text: &str) -> Result<HanoiState, String> {
    let parts: Vec<&str> = text.split('|').collect();
    if parts.len() != PEGS {
        return Err(format!("expected {PEGS} pegs separated by '|', got {}", parts.len()));
    }
    let mut pegs: [Vec<u32>; PEGS] = Default::default();
    for (i, part) in parts.iter().enumerate() {
        let inner = part
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| format!("peg {i} is not a bracketed list"))?;
        for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            pegs[i].push(item.parse().map_err(|_| format!("bad disk '{item}'"))?);
        }
    }
    let state = HanoiState { pegs };
    state.check()?;
    Ok(state)
}

/// Disks sitting on a different peg than in `goal`.
pub fn misplaced(state: &HanoiState, goal: &HanoiState) -> usize {
    (1..=state.disk_count())
        .filter(|&d| state.peg_of(d) != goal.peg_of(d))
        .count()
}
