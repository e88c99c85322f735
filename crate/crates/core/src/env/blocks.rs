//! Blocksworld with the four-operator vocabulary.
//!
//! The state is stored as a predicate set; transitions are computed on the
//! derived support layout (what each block rests on) and converted back.

use std::collections::BTreeMap;
use std::fmt;

use super::grammar::{ParseError, Term};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fact {
    On(String, String),
    OnTable(String),
    Clear(String),
    Holding(String),
    ArmEmpty,
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::On(x, y) => write!(f, "on({x},{y})"),
            Fact::OnTable(x) => write!(f, "on_table({x})"),
            Fact::Clear(x) => write!(f, "clear({x})"),
            Fact::Holding(x) => write!(f, "holding({x})"),
            Fact::ArmEmpty => write!(f, "arm_empty"),
        }
    }
}

impl Fact {
    fn blocks(&self) -> Vec<&str> {
        match self {
            Fact::On(x, y) => vec![x, y],
            Fact::OnTable(x) | Fact::Clear(x) | Fact::Holding(x) => vec![x],
            Fact::ArmEmpty => vec![],
        }
    }

    /// Parses the canonical text form (`on(a,b)`, `arm_empty`, ...).
    pub fn parse(text: &str) -> Result<Fact, String> {
        let text = text.trim();
        if text.eq_ignore_ascii_case("arm_empty") {
            return Ok(Fact::ArmEmpty);
        }
        let term = super::grammar::parse_term(text).map_err(|e| e.to_string())?;
        let names: Vec<String> = term
            .args
            .iter()
            .enumerate()
            .map(|(i, _)| term.atom(i).map(|a| a.text.clone()).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let arity = |n: usize| {
            if names.len() == n {
                Ok(())
            } else {
                Err(format!("predicate {} takes {n} argument(s)", term.op))
            }
        };
        match term.op.as_str() {
            "on" => arity(2).map(|_| Fact::On(names[0].clone(), names[1].clone())),
            "on_table" => arity(1).map(|_| Fact::OnTable(names[0].clone())),
            "clear" => arity(1).map(|_| Fact::Clear(names[0].clone())),
            "holding" => arity(1).map(|_| Fact::Holding(names[0].clone())),
            other => Err(format!("unknown predicate '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlocksState {
    pub facts: Vec<Fact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockOp {
    PickUp(String),
    PutDown(String),
    Stack(String, String),
    Unstack(String, String),
}

impl fmt::Display for BlockOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockOp::PickUp(x) => write!(f, "pick-up({x})"),
            BlockOp::PutDown(x) => write!(f, "put-down({x})"),
            BlockOp::Stack(x, y) => write!(f, "stack({x},{y})"),
            BlockOp::Unstack(x, y) => write!(f, "unstack({x},{y})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Support {
    Table,
    On(String),
    Held,
}

/// What each block rests on. Keys are sorted block names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub support: BTreeMap<String, Support>,
}

impl Layout {
    pub fn from_facts(facts: &[Fact]) -> Result<Layout, String> {
        let mut support: BTreeMap<String, Support> = BTreeMap::new();
        for fact in facts {
            for b in fact.blocks() {
                if b.is_empty() {
                    return Err("empty block name".to_string());
                }
            }
            let (block, s) = match fact {
                Fact::On(x, y) => {
                    if x == y {
                        return Err(format!("block {x} cannot be on itself"));
                    }
                    (x, Support::On(y.clone()))
                }
                Fact::OnTable(x) => (x, Support::Table),
                Fact::Holding(x) => (x, Support::Held),
                Fact::Clear(_) | Fact::ArmEmpty => continue,
            };
            if let Some(prev) = support.insert(block.clone(), s.clone()) {
                if prev != s {
                    return Err(format!("block {block} has more than one position"));
                }
            }
        }
        for fact in facts {
            for b in fact.blocks() {
                if !support.contains_key(b) {
                    return Err(format!("block {b} has no position (on, on_table or holding)"));
                }
            }
        }
        let layout = Layout { support };
        layout.check_structure()?;
        let derived = layout.facts();
        let mut given: Vec<Fact> = facts.to_vec();
        given.sort();
        given.dedup();
        for fact in &derived {
            if !given.contains(fact) {
                return Err(format!("state is missing implied fact {fact}"));
            }
        }
        for fact in &given {
            if !derived.contains(fact) {
                return Err(format!("fact {fact} is inconsistent with the rest of the state"));
            }
        }
        Ok(layout)
    }

    fn check_structure(&self) -> Result<(), String> {
        let held: Vec<&String> = self
            .support
            .iter()
            .filter(|(_, s)| **s == Support::Held)
            .map(|(b, _)| b)
            .collect();
        if held.len() > 1 {
            return Err(format!("the arm holds more than one block ({})", held.len()));
        }
        let mut below_count: BTreeMap<&str, usize> = BTreeMap::new();
        for (b, s) in &self.support {
            if let Support::On(y) = s {
                match self.support.get(y) {
                    None => return Err(format!("block {b} is on unknown block {y}")),
                    Some(Support::Held) => return Err(format!("block {b} is on held block {y}")),
                    Some(_) => {}
                }
                *below_count.entry(y.as_str()).or_default() += 1;
            }
        }
        if let Some((y, _)) = below_count.iter().find(|(_, n)| **n > 1) {
            return Err(format!("more than one block is on {y}"));
        }
        for start in self.support.keys() {
            let mut cur = start;
            let mut steps = 0;
            while let Some(Support::On(next)) = self.support.get(cur) {
                cur = next;
                steps += 1;
                if steps > self.support.len() {
                    return Err(format!("blocks form a cycle through {start}"));
                }
            }
        }
        Ok(())
    }

    pub fn holding(&self) -> Option<&str> {
        self.support
            .iter()
            .find(|(_, s)| **s == Support::Held)
            .map(|(b, _)| b.as_str())
    }

    /// The block sitting directly on `block`, if any.
    pub fn above(&self, block: &str) -> Option<&str> {
        self.support
            .iter()
            .find(|(_, s)| matches!(s, Support::On(y) if y == block))
            .map(|(b, _)| b.as_str())
    }

    pub fn is_clear(&self, block: &str) -> bool {
        self.support.get(block).is_some_and(|s| *s != Support::Held) && self.above(block).is_none()
    }

    pub fn facts(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for (b, s) in &self.support {
            match s {
                Support::Table => out.push(Fact::OnTable(b.clone())),
                Support::On(y) => out.push(Fact::On(b.clone(), y.clone())),
                Support::Held => out.push(Fact::Holding(b.clone())),
            }
            if self.is_clear(b) {
                out.push(Fact::Clear(b.clone()));
            }
        }
        if self.holding().is_none() {
            out.push(Fact::ArmEmpty);
        }
        out.sort();
        out
    }

    /// Towers listed bottom to top, ordered by their bottom block.
    pub fn towers(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for (b, s) in &self.support {
            if *s == Support::Table {
                let mut tower = vec![b.clone()];
                while let Some(up) = self.above(tower.last().unwrap()) {
                    tower.push(up.to_string());
                }
                out.push(tower);
            }
        }
        out
    }
}

impl BlocksState {
    pub fn from_layout(layout: &Layout) -> Self {
        Self { facts: layout.facts() }
    }

    /// Builds a state from towers given bottom to top.
    pub fn from_towers(towers: &[Vec<String>]) -> Self {
        let mut layout = Layout::default();
        for tower in towers {
            for (i, b) in tower.iter().enumerate() {
                let s = if i == 0 { Support::Table } else { Support::On(tower[i - 1].clone()) };
                layout.support.insert(b.clone(), s);
            }
        }
        Self::from_layout(&layout)
    }

    pub fn layout(&self) -> Result<Layout, String> {
        Layout::from_facts(&self.facts)
    }

    pub fn normalized(&self) -> Self {
        let mut facts = self.facts.clone();
        facts.sort();
        facts.dedup();
        Self { facts }
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .facts
            .iter()
            .flat_map(|f| f.blocks().into_iter().map(str::to_string))
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn check(&self) -> Result<(), String> {
        self.layout().map(|_| ())
    }
}

fn require_block(layout: &Layout, b: &str) -> Result<(), String> {
    if layout.support.contains_key(b) {
        Ok(())
    } else {
        Err(format!("block {b} does not exist"))
    }
}

fn not_clear(layout: &Layout, b: &str) -> String {
    match layout.above(b) {
        Some(up) => format!("block {b} is not clear ({up} is on it)"),
        None => format!("block {b} is not clear (it is being held)"),
    }
}

fn arm_busy(layout: &Layout) -> Option<String> {
    layout.holding().map(|h| format!("the arm is not empty (holding {h})"))
}

pub fn step_layout(layout: &Layout, op: &BlockOp) -> Result<Layout, String> {
    let mut next = layout.clone();
    match op {
        BlockOp::PickUp(x) => {
            require_block(layout, x)?;
            if let Some(msg) = arm_busy(layout) {
                return Err(msg);
            }
            if layout.support[x] != Support::Table {
                return Err(format!("block {x} is not on the table"));
            }
            if !layout.is_clear(x) {
                return Err(not_clear(layout, x));
            }
            next.support.insert(x.clone(), Support::Held);
        }
        BlockOp::PutDown(x) => {
            require_block(layout, x)?;
            if layout.support[x] != Support::Held {
                return Err(format!("the arm is not holding {x}"));
            }
            next.support.insert(x.clone(), Support::Table);
        }
        BlockOp::Stack(x, y) => {
            require_block(layout, x)?;
            require_block(layout, y)?;
            if layout.support[x] != Support::Held {
                return Err(format!("the arm is not holding {x}"));
            }
            if x == y {
                return Err(format!("block {x} cannot be stacked on itself"));
            }
            if !layout.is_clear(y) {
                return Err(not_clear(layout, y));
            }
            next.support.insert(x.clone(), Support::On(y.clone()));
        }
        BlockOp::Unstack(x, y) => {
            require_block(layout, x)?;
            require_block(layout, y)?;
            if layout.support[x] != Support::On(y.clone()) {
                return Err(format!("block {x} is not on {y}"));
            }
            if let Some(msg) = arm_busy(layout) {
                return Err(msg);
            }
            if !layout.is_clear(x) {
                return Err(not_clear(layout, x));
            }
            next.support.insert(x.clone(), Support::Held);
        }
    }
    Ok(next)
}

pub fn step(state: &BlocksState, op: &BlockOp) -> Result<BlocksState, String> {
    let layout = state.layout()?;
    step_layout(&layout, op).map(|l| BlocksState::from_layout(&l))
}

pub fn legal(state: &BlocksState) -> Vec<BlockOp> {
    let Ok(layout) = state.layout() else { return Vec::new() };
    let mut out = Vec::new();
    match layout.holding() {
        Some(h) => {
            out.push(BlockOp::PutDown(h.to_string()));
            for y in layout.support.keys() {
                if y != h && layout.is_clear(y) {
                    out.push(BlockOp::Stack(h.to_string(), y.clone()));
                }
            }
        }
        None => {
            for (x, s) in &layout.support {
                if !layout.is_clear(x) {
                    continue;
                }
                match s {
                    Support::Table => out.push(BlockOp::PickUp(x.clone())),
                    Support::On(y) => out.push(BlockOp::Unstack(x.clone(), y.clone())),
                    Support::Held => {}
                }
            }
        }
    }
    out
}

pub fn universe(state: &BlocksState) -> Vec<BlockOp> {
    let names = state.block_names();
    let mut out = Vec::new();
    for x in &names {
        out.push(BlockOp::PickUp(x.clone()));
        out.push(BlockOp::PutDown(x.clone()));
        for y in &names {
            if x != y {
                out.push(BlockOp::Stack(x.clone(), y.clone()));
                out.push(BlockOp::Unstack(x.clone(), y.clone()));
            }
        }
    }
    out
}

pub fn parse(term: &Term) -> Result<BlockOp, ParseError> {
    let name = |i: usize| term.atom(i).map(|a| a.text.clone());
    match term.op.as_str() {
        "pick-up" => {
            term.expect_arity(1)?;
            Ok(BlockOp::PickUp(name(0)?))
        }
        "put-down" => {
            term.expect_arity(1)?;
            Ok(BlockOp::PutDown(name(0)?))
        }
        "stack" => {
            term.expect_arity(2)?;
            Ok(BlockOp::Stack(name(0)?, name(1)?))
        }
        "unstack" => {
            term.expect_arity(2)?;
            Ok(BlockOp::Unstack(name(0)?, name(1)?))
        }
        other => Err(ParseError::new(
            term.op_pos,
            "one of 'pick-up', 'put-down', 'stack', 'unstack'",
            format!("'{other}'"),
        )),
    }
}

pub fn facts_text(facts: &[Fact]) -> String {
    facts.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" ")
}

/// Parses a whitespace-separated fact list.
pub fn parse_facts(text: &str) -> Result<Vec<Fact>, String> {
    text.split_whitespace().map(Fact::parse).collect()
}

pub fn encode(state: &BlocksState) -> String {
    facts_text(&state.normalized().facts)
}

pub fn decode(text: &str) -> Result<BlocksState, String> {
    let state = BlocksState { facts: parse_facts(text)? }.normalized();
    state.check()?;
    Ok(state)
}

pub fn render(state: &BlocksState) -> String {
    match state.layout() {
        Ok(layout) => {
            let towers: Vec<String> = layout
                .towers()
                .iter()
                .map(|t| format!("[{}]", t.join(", ")))
                .collect();
            let arm = match layout.holding() {
                Some(h) => format!("holding {h}"),
                None => "empty".to_string(),
            };
            format!("towers (bottom to top): {}; arm: {arm}", towers.join(" "))
        }
        Err(_) => format!("facts: {}", encode(state)),
    }
}

/// Goal facts not yet true in `state`.
pub fn unsatisfied(state: &BlocksState, goal: &[Fact]) -> usize {
    goal.iter().filter(|g| !state.facts.contains(g)).count()
}
