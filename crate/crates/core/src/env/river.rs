//! River Crossing with actor/agent pairs and a two-seat boat.
//!
//! An actor may never share a bank (or the boat) with another pair's agent
//! unless its own agent is also present.

use std::fmt;

use super::grammar::{ParseError, Term};

pub const BOAT_CAPACITY: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    fn parse(text: &str) -> Option<Side> {
        match text.to_ascii_lowercase().as_str() {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Actor,
    Agent,
}

/// `actor{i}` or `agent{i}`, pairs numbered from 1. Ordered by pair, then role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Entity {
    pub pair: u32,
    pub role: Role,
}

impl Entity {
    pub fn actor(pair: u32) -> Self {
        Self { pair, role: Role::Actor }
    }

    pub fn agent(pair: u32) -> Self {
        Self { pair, role: Role::Agent }
    }

    fn parse(text: &str) -> Option<Entity> {
        let lower = text.to_ascii_lowercase();
        let (role, rest) = if let Some(rest) = lower.strip_prefix("actor") {
            (Role::Actor, rest)
        } else if let Some(rest) = lower.strip_prefix("agent") {
            (Role::Agent, rest)
        } else {
            return None;
        };
        let pair: u32 = rest.parse().ok()?;
        (pair >= 1).then_some(Entity { pair, role })
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Role::Actor => write!(f, "actor{}", self.pair),
            Role::Agent => write!(f, "agent{}", self.pair),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RiverState {
    pub left: Vec<Entity>,
    pub right: Vec<Entity>,
    pub boat: Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Crossing {
    pub direction: Side,
    pub passengers: Vec<Entity>,
}

fn entity_list(items: &[Entity]) -> String {
    let names: Vec<String> = items.iter().map(|e| e.to_string()).collect();
    format!("[{}]", names.join(","))
}

impl fmt::Display for Crossing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut sorted = self.passengers.clone();
        sorted.sort();
        write!(f, "cross({},{})", self.direction.name(), entity_list(&sorted))
    }
}

impl RiverState {
    /// Every pair and the boat on `side`.
    pub fn all_on(pairs: u32, side: Side) -> Self {
        let everyone: Vec<Entity> = (1..=pairs)
            .flat_map(|i| [Entity::actor(i), Entity::agent(i)])
            .collect();
        match side {
            Side::Left => Self { left: everyone, right: Vec::new(), boat: side },
            Side::Right => Self { left: Vec::new(), right: everyone, boat: side },
        }
    }

    pub fn pairs(&self) -> u32 {
        ((self.left.len() + self.right.len()) / 2) as u32
    }

    pub fn bank(&self, side: Side) -> &[Entity] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn bank_mut(&mut self, side: Side) -> &mut Vec<Entity> {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        out.left.sort();
        out.right.sort();
        out
    }

    pub fn check(&self) -> Result<(), String> {
        let mut all: Vec<Entity> = self.left.iter().chain(&self.right).copied().collect();
        all.sort();
        let n = (all.len() / 2) as u32;
        let expected: Vec<Entity> = (1..=n).flat_map(|i| [Entity::actor(i), Entity::agent(i)]).collect();
        if all != expected {
            return Err("every actor and agent must appear on exactly one bank".to_string());
        }
        for side in [Side::Left, Side::Right] {
            if let Some(msg) = unsafe_group(self.bank(side)) {
                return Err(format!("on the {} bank {msg}", side.name()));
            }
        }
        Ok(())
    }
}

/// Describes the first safety violation in a group, if any.
pub fn unsafe_group(group: &[Entity]) -> Option<String> {
    for actor in group.iter().filter(|e| e.role == Role::Actor) {
        let own_agent = group.contains(&Entity::agent(actor.pair));
        if own_agent {
            continue;
        }
        if let Some(foreign) = group.iter().find(|e| e.role == Role::Agent && e.pair != actor.pair) {
            return Some(format!(
                "{actor} would be with {foreign} without {}",
                Entity::agent(actor.pair)
            ));
        }
    }
    None
}

pub fn step(state: &RiverState, mv: &Crossing) -> Result<RiverState, String> {
    let count = mv.passengers.len();
    if count == 0 || count > BOAT_CAPACITY {
        return Err(format!("the boat carries 1 to {BOAT_CAPACITY} passengers, not {count}"));
    }
    if count == 2 && mv.passengers[0] == mv.passengers[1] {
        return Err(format!("{} is listed twice", mv.passengers[0]));
    }
    let origin = state.boat;
    if mv.direction == origin {
        return Err(format!(
            "the boat is on the {} bank and cannot cross {}",
            origin.name(),
            mv.direction.name()
        ));
    }
    let pairs = state.pairs();
    for p in &mv.passengers {
        if p.pair > pairs {
            return Err(format!("{p} does not exist"));
        }
        if !state.bank(origin).contains(p) {
            return Err(format!("{p} is not on the {} bank", origin.name()));
        }
    }
    if let Some(msg) = unsafe_group(&mv.passengers) {
        return Err(format!("in the boat {msg}"));
    }
    let mut next = state.clone();
    next.bank_mut(origin).retain(|e| !mv.passengers.contains(e));
    next.bank_mut(mv.direction).extend(mv.passengers.iter().copied());
    next.boat = mv.direction;
    for side in [Side::Left, Side::Right] {
        if let Some(msg) = unsafe_group(next.bank(side)) {
            return Err(format!("on the {} bank {msg}", side.name()));
        }
    }
    Ok(next.normalized())
}

fn crossing_candidates(bank: &[Entity], direction: Side) -> Vec<Crossing> {
    let mut sorted = bank.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    for (i, a) in sorted.iter().enumerate() {
        out.push(Crossing { direction, passengers: vec![*a] });
        for b in &sorted[i + 1..] {
            out.push(Crossing { direction, passengers: vec![*a, *b] });
        }
    }
    out
}

pub fn legal(state: &RiverState) -> Vec<Crossing> {
    let origin = state.boat;
    let direction = origin.other();
    let here = state.bank(origin);
    let there = state.bank(direction);
    crossing_candidates(here, direction)
        .into_iter()
        .filter(|c| {
            if unsafe_group(&c.passengers).is_some() {
                return false;
            }
            let staying: Vec<Entity> = here.iter().filter(|e| !c.passengers.contains(e)).copied().collect();
            let arriving: Vec<Entity> = there.iter().chain(&c.passengers).copied().collect();
            unsafe_group(&staying).is_none() && unsafe_group(&arriving).is_none()
        })
        .collect()
}

pub fn universe(state: &RiverState) -> Vec<Crossing> {
    let everyone: Vec<Entity> = (1..=state.pairs())
        .flat_map(|i| [Entity::actor(i), Entity::agent(i)])
        .collect();
    [Side::Left, Side::Right]
        .into_iter()
        .flat_map(|d| crossing_candidates(&everyone, d))
        .collect()
}

pub fn parse(term: &Term) -> Result<Crossing, ParseError> {
    if term.op != "cross" {
        return Err(ParseError::new(term.op_pos, "'cross'", format!("'{}'", term.op)));
    }
    term.expect_arity(2)?;
    let dir = term.atom(0)?;
    let direction = Side::parse(&dir.text)
        .ok_or_else(|| ParseError::new(dir.pos, "'left' or 'right'", format!("'{}'", dir.text)))?;
    let items = term.list(1)?;
    let mut passengers = Vec::with_capacity(items.len());
    for item in items {
        passengers.push(Entity::parse(&item.text).ok_or_else(|| {
            ParseError::new(item.pos, "an entity like actor1 or agent1", format!("'{}'", item.text))
        })?);
    }
    passengers.sort();
    Ok(Crossing { direction, passengers })
}

fn parse_bank(text: &str) -> Result<Vec<Entity>, String> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("bank '{text}' is not a bracketed list"))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Entity::parse(s).ok_or_else(|| format!("bad entity '{s}'")))
        .collect()
}

pub fn encode(state: &RiverState) -> String {
    let s = state.normalized();
    format!(
        "left={};right={};boat={}",
        entity_list(&s.left),
        entity_list(&s.right),
        s.boat.name()
    )
}

pub fn decode(text: &str) -> Result<RiverState, String> {
    let mut left = None;
    let mut right = None;
    let mut boat = None;
    for field in text.split(';') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format!("field '{field}' lacks '='"))?;
        match key.trim() {
            "left" => left = Some(parse_bank(value)?),
            "right" => right = Some(parse_bank(value)?),
            "boat" => boat = Some(Side::parse(value.trim()).ok_or_else(|| format!("bad boat side '{value}'"))?),
            other => return Err(format!("unknown river field '{other}'")),
        }
    }
    let state = RiverState {
        left: left.ok_or("missing left bank")?,
        right: right.ok_or("missing right bank")?,
        boat: boat.ok_or("missing boat side")?,
    }
    .normalized();
    state.check()?;
    Ok(state)
}

pub fn render(state: &RiverState) -> String {
    let s = state.normalized();
    let names = |v: &[Entity]| {
        if v.is_empty() {
            "(nobody)".to_string()
        } else {
            v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
        }
    };
    format!(
        "left bank: {}; right bank: {}; boat: {}",
        names(&s.left),
        names(&s.right),
        s.boat.name()
    )
}

/// Entities and boat not yet where `goal` has them.
pub fn misplaced(state: &RiverState, goal: &RiverState) -> usize {
    let wrong = state.left.iter().filter(|e| !goal.left.contains(e)).count()
        + state.right.iter().filter(|e| !goal.right.contains(e)).count();
    wrong + usize::from(state.boat != goal.boat)
}
