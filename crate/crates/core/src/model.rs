//! Setplay domain objects and their flattening into the two-level feature
//! schema: one [`SetplayFeatures`] row per plan, one [`StepFeatures`] row
//! per step.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sexpr::{self, SExpr, SexprError, Span};

/// `nextStep` value used for finishing transitions and for steps that have
/// no transition at all.
pub const TERMINAL_STEP: i64 = -1;

/// Canonical behavior of an own participant that received no directive.
pub const IDLE_BEHAVIOR: &str = "idle()";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Team {
    Our,
    Opp,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlayerRef {
    Role(String),
    Numbered { team: Team, number: u32 },
}

impl PlayerRef {
    pub fn is_ours(&self) -> bool {
        !matches!(
            self,
            PlayerRef::Numbered {
                team: Team::Opp,
                ..
            }
        )
    }
}

impl fmt::Display for PlayerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlayerRef::Role(name) => f.write_str(name),
            PlayerRef::Numbered {
                team: Team::Our,
                number,
            } => write!(f, "our_{number}"),
            PlayerRef::Numbered {
                team: Team::Opp,
                number,
            } => write!(f, "opp_{number}"),
        }
    }
}

/// Parsed Boolean condition. Operators (`and`, `or`, `not`) are inner
/// nodes; predicates are leaves whose label carries their arguments, e.g.
/// `playm(ko_our)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolTree {
    pub label: String,
    #[serde(default)]
    pub children: Vec<BoolTree>,
}

impl BoolTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        BoolTree {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<BoolTree>) -> Self {
        BoolTree {
            label: label.into(),
            children,
        }
    }

    pub fn always() -> Self {
        BoolTree::leaf("true")
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(BoolTree::size).sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    pub actor: PlayerRef,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Target step id, or [`TERMINAL_STEP`] for `finish`/`abort` forms.
    pub next_step: i64,
    pub condition: Option<BoolTree>,
    pub directives: Vec<Behavior>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub player: PlayerRef,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub id: i64,
    pub wait_time: Option<f64>,
    pub abort_time: Option<f64>,
    pub participants: Vec<Participant>,
    pub condition: BoolTree,
    pub lead_player: Option<PlayerRef>,
    pub transitions: Vec<Transition>,
}

impl StepRecord {
    pub fn ours(&self) -> impl Iterator<Item = &Participant> {
        self.participants.iter().filter(|p| p.player.is_ours())
    }

    pub fn theirs(&self) -> impl Iterator<Item = &Participant> {
        self.participants.iter().filter(|p| !p.player.is_ours())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetplayRecord {
    pub name: String,
    pub id: i64,
    pub invertible: bool,
    pub players: Vec<PlayerRef>,
    pub abort_cond: BoolTree,
    pub steps: Vec<StepRecord>,
    /// Keywords the schema does not use, with their serialized values.
    pub extra: BTreeMap<String, String>,
}

/// Level-1 row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetplayFeatures {
    pub name: String,
    pub id: i64,
    pub our_players_number: u32,
    pub their_players_number: u32,
    pub abort_condition: BoolTree,
    #[serde(rename = "steps")]
    pub steps_count: u32,
    pub steps_list: Vec<StepFeatures>,
}

/// Level-2 row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepFeatures {
    pub our_players_in_step: u32,
    pub their_players_in_step: u32,
    pub wait_time: f64,
    pub abort_time: f64,
    pub our_players_list: Vec<Point>,
    pub their_players_list: Vec<Point>,
    pub next_step: i64,
    pub condition: BoolTree,
    pub behaviors_list: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingInitialStep,
    DuplicateStepId(i64),
    DanglingTransition { from: i64, to: i64 },
    UndeclaredParticipant { step: i64, player: PlayerRef },
    NegativeTime { step: i64 },
    AbortBeforeWait { step: i64 },
}

impl Violation {
    pub fn path(&self) -> String {
        match self {
            Violation::MissingInitialStep => "steps".to_string(),
            Violation::DuplicateStepId(id) => format!("steps[id={id}]"),
            Violation::DanglingTransition { from, .. } => format!("steps[id={from}].transitions"),
            Violation::UndeclaredParticipant { step, .. } => {
                format!("steps[id={step}].participants")
            }
            Violation::NegativeTime { step } | Violation::AbortBeforeWait { step } => {
                format!("steps[id={step}]")
            }
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingInitialStep => write!(f, "no initial step with id 0"),
            Violation::DuplicateStepId(id) => write!(f, "duplicate step id {id}"),
            Violation::DanglingTransition { from, to } => {
                write!(f, "transition from step {from} to unknown step {to}")
            }
            Violation::UndeclaredParticipant { step, player } => {
                write!(f, "step {step} uses undeclared player {player}")
            }
            Violation::NegativeTime { step } => write!(f, "step {step} has a negative time"),
            Violation::AbortBeforeWait { step } => {
                write!(f, "step {step} has abortTime smaller than waitTime")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Syntax(#[from] SexprError),
    #[error("missing field `{name}` at {span}")]
    MissingField { name: String, span: Span },
    #[error("type mismatch at `{path}` ({span}): expected {expected}")]
    TypeMismatch {
        path: String,
        expected: &'static str,
        span: Span,
    },
    #[error("duplicate step id {0}")]
    DuplicateStepId(i64),
    #[error("invalid setplay: {}", .0.iter().map(|v| format!("{}: {v}", v.path())).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

impl ModelError {
    pub fn span(&self) -> Option<Span> {
        match self {
            ModelError::Syntax(e) => Some(e.span()),
            ModelError::MissingField { span, .. } | ModelError::TypeMismatch { span, .. } => {
                Some(*span)
            }
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, ModelError>;

fn mismatch(path: &str, expected: &'static str, at: &SExpr) -> ModelError {
    ModelError::TypeMismatch {
        path: path.to_string(),
        expected,
        span: at.span,
    }
}

/// Parse a numeric atom. Only atoms that look like numbers qualify, so
/// `inf` or `nan` stay symbols.
pub fn parse_number(text: &str) -> Option<f64> {
    let first = text.chars().next()?;
    if !(first.is_ascii_digit() || matches!(first, '-' | '+' | '.')) {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Shortest decimal form with trailing `.0` dropped and `-0` folded to `0`.
pub fn format_number(value: f64) -> String {
    if value == 0.0 {
        "0".to_string()
    } else {
        format!("{value}")
    }
}

fn canonical_atom(text: &str) -> String {
    parse_number(text)
        .map(format_number)
        .unwrap_or_else(|| text.to_string())
}

/// Values of a form after its head, with keyword atoms dropped.
fn positional_args(items: &[SExpr]) -> impl Iterator<Item = &SExpr> {
    items
        .iter()
        .skip(1)
        .filter(|c| !c.as_atom().is_some_and(|a| a.starts_with(':')))
}

/// Deterministic text for an action or predicate form:
/// `(bto :players (list (playerRole :roleName Player5)) :type normal)`
/// becomes `bto(Player5,normal)`.
pub fn canonical_form(expr: &SExpr) -> String {
    let Some(items) = expr.as_list() else {
        return canonical_atom(expr.as_atom().unwrap_or_default());
    };
    if let Ok(player) = player_ref(expr, "") {
        return player.to_string();
    }
    let join =
        |it: &mut dyn Iterator<Item = &SExpr>| it.map(canonical_form).collect::<Vec<_>>().join(",");
    match expr.head() {
        Some("list" | "seq" | "pt") => join(&mut positional_args(items)),
        Some(head) => format!("{head}({})", join(&mut positional_args(items))),
        None => join(&mut items.iter()),
    }
}

fn player_ref(expr: &SExpr, path: &str) -> Result<PlayerRef> {
    match expr.head() {
        Some("playerRole") => {
            let name = expr
                .keyword(":roleName")
                .and_then(SExpr::as_atom)
                .ok_or_else(|| mismatch(path, "(playerRole :roleName NAME)", expr))?;
            Ok(PlayerRef::Role(name.to_string()))
        }
        Some("player") => {
            let team = match expr.keyword(":team").and_then(SExpr::as_atom) {
                Some("our" | "ours") => Team::Our,
                Some("opp") => Team::Opp,
                _ => return Err(mismatch(path, "(player :team our|opp :number N)", expr)),
            };
            let number = expr
                .keyword(":number")
                .and_then(SExpr::as_atom)
                .and_then(|a| a.parse::<u32>().ok())
                .filter(|n| *n >= 1)
                .ok_or_else(|| mismatch(path, "(player :team our|opp :number N)", expr))?;
            Ok(PlayerRef::Numbered { team, number })
        }
        _ => Err(mismatch(path, "a player reference", expr)),
    }
}

fn list_items<'a>(expr: &'a SExpr, path: &str) -> Result<&'a [SExpr]> {
    match expr.head() {
        Some("list" | "seq") => Ok(&expr.as_list().expect("has head")[1..]),
        _ => Err(mismatch(path, "(list ...)", expr)),
    }
}

fn point(expr: &SExpr, path: &str) -> Result<Point> {
    if expr.head() != Some("pt") {
        return Err(mismatch(path, "(pt :x X :y Y)", expr));
    }
    let coord = |key| {
        expr.keyword(key)
            .and_then(SExpr::as_atom)
            .and_then(parse_number)
            .ok_or_else(|| mismatch(path, "(pt :x X :y Y)", expr))
    };
    Ok(Point::new(coord(":x")?, coord(":y")?))
}

pub fn bool_tree(expr: &SExpr, path: &str) -> Result<BoolTree> {
    match (expr.head(), expr.as_list()) {
        (Some(op @ ("and" | "or")), Some(items)) => {
            if items.len() < 3 {
                return Err(mismatch(path, "at least two operands", expr));
            }
            let children = items[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| bool_tree(c, &format!("{path}.{op}[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(BoolTree::node(op, children))
        }
        (Some("not"), Some(items)) => {
            if items.len() != 2 {
                return Err(mismatch(path, "exactly one operand", expr));
            }
            Ok(BoolTree::node(
                "not",
                vec![bool_tree(&items[1], &format!("{path}.not"))?],
            ))
        }
        (_, Some([])) => Err(mismatch(path, "a condition", expr)),
        _ => Ok(BoolTree::leaf(canonical_form(expr))),
    }
}

/// Keyword/value pairs of a form, skipping its head.
fn keyword_pairs<'a>(expr: &'a SExpr, path: &str) -> Result<Vec<(&'a str, &'a SExpr)>> {
    let items = expr
        .as_list()
        .ok_or_else(|| mismatch(path, "a list form", expr))?;
    let mut pairs = Vec::new();
    let mut rest = items.iter().skip(1);
    while let Some(key) = rest.next() {
        let name = key
            .as_atom()
            .filter(|a| a.starts_with(':'))
            .ok_or_else(|| mismatch(path, "a :keyword", key))?;
        let value = rest.next().ok_or_else(|| ModelError::MissingField {
            name: format!("{path}.{}", &name[1..]),
            span: key.span,
        })?;
        pairs.push((&name[1..], value));
    }
    Ok(pairs)
}

fn required<'a>(
    pairs: &[(&str, &'a SExpr)],
    key: &str,
    path: &str,
    owner: &SExpr,
) -> Result<&'a SExpr> {
    optional(pairs, key).ok_or_else(|| ModelError::MissingField {
        name: if path.is_empty() {
            key.to_string()
        } else {
            format!("{path}.{key}")
        },
        span: owner.span,
    })
}

fn optional<'a>(pairs: &[(&str, &'a SExpr)], key: &str) -> Option<&'a SExpr> {
    pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn integer(expr: &SExpr, path: &str) -> Result<i64> {
    expr.as_atom()
        .and_then(|a| a.parse::<i64>().ok())
        .ok_or_else(|| mismatch(path, "an integer", expr))
}

fn real(expr: &SExpr, path: &str) -> Result<f64> {
    expr.as_atom()
        .and_then(parse_number)
        .ok_or_else(|| mismatch(path, "a number", expr))
}

fn transition(expr: &SExpr, path: &str) -> Result<Transition> {
    let pairs = keyword_pairs(expr, path)?;
    let next_step = match expr.head() {
        Some("nextStep") => integer(required(&pairs, "id", path, expr)?, &format!("{path}.id"))?,
        Some("finish" | "abort") => TERMINAL_STEP,
        _ => {
            return Err(mismatch(
                path,
                "(nextStep ...), (finish ...) or (abort ...)",
                expr,
            ))
        }
    };
    let condition = optional(&pairs, "condition")
        .map(|c| bool_tree(c, &format!("{path}.condition")))
        .transpose()?;
    let mut directives = Vec::new();
    if let Some(list) = optional(&pairs, "directives") {
        for (d, directive) in list_items(list, path)?.iter().enumerate() {
            let dpath = format!("{path}.directives[{d}]");
            let dpairs = keyword_pairs(directive, &dpath)?;
            let actions = list_items(required(&dpairs, "actions", &dpath, directive)?, &dpath)?;
            let action = actions
                .iter()
                .map(canonical_form)
                .collect::<Vec<_>>()
                .join(";");
            let players = list_items(required(&dpairs, "players", &dpath, directive)?, &dpath)?;
            for (p, actor) in players.iter().enumerate() {
                directives.push(Behavior {
                    actor: player_ref(actor, &format!("{dpath}.players[{p}]"))?,
                    action: action.clone(),
                });
            }
        }
    }
    Ok(Transition {
        next_step,
        condition,
        directives,
    })
}

fn step(expr: &SExpr, path: &str) -> Result<StepRecord> {
    if expr.head() != Some("step") {
        return Err(mismatch(path, "(step ...)", expr));
    }
    let pairs = keyword_pairs(expr, path)?;
    let id = integer(required(&pairs, "id", path, expr)?, &format!("{path}.id"))?;
    if id < 0 {
        return Err(mismatch(
            &format!("{path}.id"),
            "a non-negative integer",
            expr,
        ));
    }
    let time = |key: &str| {
        optional(&pairs, key)
            .map(|v| real(v, &format!("{path}.{key}")))
            .transpose()
    };
    let mut participants = Vec::new();
    if let Some(list) = optional(&pairs, "participants") {
        for (i, at) in list_items(list, path)?.iter().enumerate() {
            let ppath = format!("{path}.participants[{i}]");
            match (at.head(), at.as_list()) {
                (Some("at"), Some([_, who, pos])) => participants.push(Participant {
                    player: player_ref(who, &ppath)?,
                    position: point(pos, &ppath)?,
                }),
                _ => return Err(mismatch(&ppath, "(at PLAYER (pt :x X :y Y))", at)),
            }
        }
    }
    let condition = bool_tree(
        required(&pairs, "condition", path, expr)?,
        &format!("{path}.condition"),
    )?;
    let lead_player = optional(&pairs, "leadPlayer")
        .map(|p| player_ref(p, &format!("{path}.leadPlayer")))
        .transpose()?;
    let transitions = match optional(&pairs, "transitions") {
        Some(list) => list_items(list, path)?
            .iter()
            .enumerate()
            .map(|(i, t)| transition(t, &format!("{path}.transitions[{i}]")))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(StepRecord {
        id,
        wait_time: time("waitTime")?,
        abort_time: time("abortTime")?,
        participants,
        condition,
        lead_player,
        transitions,
    })
}

/// Interpret a `(setplay ...)` form. The record is validated before it is
/// returned; any violation is reported as [`ModelError::Invalid`].
pub fn extract_setplay(root: &SExpr) -> Result<SetplayRecord> {
    if root.head() != Some("setplay") {
        return Err(mismatch("setplay", "(setplay ...)", root));
    }
    let pairs = keyword_pairs(root, "setplay")?;
    let name = required(&pairs, "name", "", root)?
        .as_atom()
        .ok_or_else(|| mismatch("setplay.name", "an atom", root))?
        .to_string();
    let id = integer(required(&pairs, "id", "", root)?, "setplay.id")?;
    let invertible = match optional(&pairs, "invertible").map(|v| v.as_atom()) {
        None | Some(Some("false")) => false,
        Some(Some("true")) => true,
        Some(_) => return Err(mismatch("setplay.invertible", "true or false", root)),
    };
    let players = list_items(required(&pairs, "players", "", root)?, "setplay.players")?
        .iter()
        .enumerate()
        .map(|(i, p)| player_ref(p, &format!("setplay.players[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let abort_cond = bool_tree(
        required(&pairs, "abortCond", "", root)?,
        "setplay.abortCond",
    )?;
    let steps = list_items(required(&pairs, "steps", "", root)?, "setplay.steps")?
        .iter()
        .enumerate()
        .map(|(i, s)| step(s, &format!("setplay.steps[{i}]")))
        .collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    if let Some(dup) = steps.iter().find(|s| !seen.insert(s.id)) {
        return Err(ModelError::DuplicateStepId(dup.id));
    }

    const KNOWN: [&str; 6] = ["name", "id", "invertible", "players", "abortCond", "steps"];
    let extra = pairs
        .iter()
        .filter(|(k, _)| !KNOWN.contains(k))
        .map(|(k, v)| (k.to_string(), sexpr::serialize(v)))
        .collect();

    let record = SetplayRecord {
        name,
        id,
        invertible,
        players,
        abort_cond,
        steps,
        extra,
    };
    let violations = validate(&record);
    if violations.is_empty() {
        Ok(record)
    } else {
        Err(ModelError::Invalid(violations))
    }
}

/// Parse text and extract a validated setplay from it.
pub fn parse_setplay(text: &str) -> Result<SetplayRecord> {
    extract_setplay(&sexpr::parse_str(text)?)
}

/// Check structural constraints. A transition target is accepted when it
/// names an existing step, is [`TERMINAL_STEP`], or is the id right after
/// the last step (the implicit finishing state of the plan automaton).
pub fn validate(sp: &SetplayRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let ids: BTreeSet<i64> = sp.steps.iter().map(|s| s.id).collect();
    if !ids.contains(&0) {
        out.push(Violation::MissingInitialStep);
    }
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for s in &sp.steps {
        if !seen.insert(s.id) && reported.insert(s.id) {
            out.push(Violation::DuplicateStepId(s.id));
        }
    }
    let finish = ids.last().map_or(0, |max| max + 1);
    let declared: HashSet<&PlayerRef> = sp.players.iter().collect();
    for s in &sp.steps {
        for t in &s.transitions {
            let to = t.next_step;
            if !(ids.contains(&to) || to == TERMINAL_STEP || to == finish) {
                out.push(Violation::DanglingTransition { from: s.id, to });
            }
        }
        for p in &s.participants {
            if !declared.contains(&p.player) {
                out.push(Violation::UndeclaredParticipant {
                    step: s.id,
                    player: p.player.clone(),
                });
            }
        }
        let negative = |t: Option<f64>| t.is_some_and(|v| v < 0.0);
        if negative(s.wait_time) || negative(s.abort_time) {
            out.push(Violation::NegativeTime { step: s.id });
        }
        if let (Some(wait), Some(abort)) = (s.wait_time, s.abort_time) {
            if abort < wait {
                out.push(Violation::AbortBeforeWait { step: s.id });
            }
        }
    }
    out
}

pub fn extract_features(sp: &SetplayRecord) -> SetplayFeatures {
    let ours = sp.players.iter().filter(|p| p.is_ours()).count() as u32;
    let theirs = sp.players.len() as u32 - ours;
    let mut steps: Vec<&StepRecord> = sp.steps.iter().collect();
    steps.sort_by_key(|s| s.id);
    let steps_list: Vec<StepFeatures> = steps
        .into_iter()
        .map(|s| extract_step_features(sp, s))
        .collect();
    SetplayFeatures {
        name: sp.name.clone(),
        id: sp.id,
        our_players_number: ours,
        their_players_number: theirs,
        abort_condition: sp.abort_cond.clone(),
        steps_count: steps_list.len() as u32,
        steps_list,
    }
}

/// Flatten one step. Next step, condition and behaviors come from the first
/// listed transition; the transition's own `:condition` wins over the
/// step's entry condition when present.
pub fn extract_step_features(_sp: &SetplayRecord, step: &StepRecord) -> StepFeatures {
    let ours: Vec<&Participant> = step.ours().collect();
    let theirs: Vec<&Participant> = step.theirs().collect();
    let primary = step.transitions.first();
    let (next_step, condition) = match primary {
        Some(t) => (
            t.next_step,
            t.condition
                .clone()
                .unwrap_or_else(|| step.condition.clone()),
        ),
        None => (TERMINAL_STEP, BoolTree::always()),
    };
    let behaviors_list = ours
        .iter()
        .map(|p| {
            let actions: Vec<&str> = primary
                .map(|t| {
                    t.directives
                        .iter()
                        .filter(|b| b.actor == p.player)
                        .map(|b| b.action.as_str())
                        .collect()
                })
                .unwrap_or_default();
            if actions.is_empty() {
                IDLE_BEHAVIOR.to_string()
            } else {
                actions.join(";")
            }
        })
        .collect();
    StepFeatures {
        our_players_in_step: ours.len() as u32,
        their_players_in_step: theirs.len() as u32,
        wait_time: step.wait_time.unwrap_or(0.0),
        abort_time: step.abort_time.unwrap_or(0.0),
        our_players_list: ours.iter().map(|p| p.position).collect(),
        their_players_list: theirs.iter().map(|p| p.position).collect(),
        next_step,
        condition,
        behaviors_list,
    }
}
