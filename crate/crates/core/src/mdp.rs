//! Declarative MDP descriptions: data model, line-oriented text format,
//! validation, reward schedules and transition sampling.
//!
//! The text format is one directive per line, `#` starts a comment:
//!
//! ```text
//! states: S S1 P G E
//! terminal: G E
//! initial: S
//! discount: 0.9
//! actions: S1 = frwd
//! trans: S1 frwd -> G 0.8, P 0.2
//! reward: G = 10
//! reward: S1 = -3 | last 5 = 0
//! appraise: S1 frwd P
//! script: S frwd S1, S1 frwd P, P frwd E
//! ```
//!
//! Non-terminal states without an `actions:` line get the single action
//! `frwd`. A `trans:` outcome without a probability has probability 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Action assumed for states that declare no actions.
pub const DEFAULT_ACTION: &str = "frwd";

/// Tolerance on the sum of outcome probabilities of a transition rule.
pub const PROB_TOLERANCE: f64 = 1e-9;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(name: impl Into<String>) -> Self {
                Self(name.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(StateId);
string_id!(ActionId);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub to: StateId,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub from: StateId,
    pub action: ActionId,
    pub outcomes: Vec<Outcome>,
}

impl TransitionRule {
    pub fn prob_of(&self, to: &StateId) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| &o.to == to)
            .map(|o| o.prob)
            .sum()
    }
}

/// Replaces the base reward during the final `final_k` training episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardOverride {
    pub final_k: usize,
    pub value: f64,
}

/// Reward received on entering a state, with optional end-of-training schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRule {
    pub entered: StateId,
    pub base: f64,
    pub overrides: Vec<RewardOverride>,
}

impl RewardRule {
    /// Reward in effect at `episode` of a `total`-episode run. When several
    /// overrides are active the one with the shortest window wins.
    pub fn value_at(&self, episode: usize, total: usize) -> f64 {
        self.overrides
            .iter()
            .filter(|o| episode + o.final_k >= total)
            .min_by_key(|o| o.final_k)
            .map_or(self.base, |o| o.value)
    }

    /// Reward in effect once training is over.
    pub fn final_value(&self) -> f64 {
        self.overrides
            .iter()
            .min_by_key(|o| o.final_k)
            .map_or(self.base, |o| o.value)
    }
}

/// A `(from, action, to)` triple: a scripted step or the appraised event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub from: StateId,
    pub action: ActionId,
    pub to: StateId,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.from, self.action, self.to)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    /// States in declaration order.
    pub states: Vec<StateId>,
    pub terminals: BTreeSet<StateId>,
    pub initial: StateId,
    pub discount: f64,
    /// Available actions per non-terminal state, in declaration order.
    pub actions: BTreeMap<StateId, Vec<ActionId>>,
    pub transitions: Vec<TransitionRule>,
    pub rewards: Vec<RewardRule>,
    pub appraisal_event: Option<Step>,
    pub script: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MdpError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: undeclared state `{name}`")]
    UndeclaredState { line: usize, name: String },
    #[error("line {line}: undeclared action `{action}` for state `{state}`")]
    UndeclaredAction {
        line: usize,
        state: String,
        action: String,
    },
    #[error("line {line}: duplicate {what}")]
    Duplicate { line: usize, what: String },
    #[error("invalid MDP: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("no transition rule for ({state}, {action})")]
    UnknownTransition { state: String, action: String },
}

impl MdpSpec {
    pub fn is_terminal(&self, s: &StateId) -> bool {
        self.terminals.contains(s)
    }

    pub fn has_state(&self, s: &StateId) -> bool {
        self.states.contains(s)
    }

    /// Actions available at `s`; empty for terminals and unknown states.
    pub fn actions_at(&self, s: &StateId) -> &[ActionId] {
        self.actions.get(s).map_or(&[], Vec::as_slice)
    }

    pub fn rule(&self, from: &StateId, action: &ActionId) -> Option<&TransitionRule> {
        self.transitions
            .iter()
            .find(|r| &r.from == from && &r.action == action)
    }

    pub fn reward_rule(&self, entered: &StateId) -> Option<&RewardRule> {
        self.rewards.iter().find(|r| &r.entered == entered)
    }

    /// Reward for entering `entered` during `episode` of a `total_episodes` run.
    /// States without a reward rule yield 0.
    pub fn reward_at(&self, episode: usize, total_episodes: usize, entered: &StateId) -> f64 {
        self.reward_rule(entered)
            .map_or(0.0, |r| r.value_at(episode, total_episodes))
    }

    /// Reward for entering `entered` after training has finished.
    pub fn final_reward(&self, entered: &StateId) -> f64 {
        self.reward_rule(entered).map_or(0.0, RewardRule::final_value)
    }

    /// Largest schedule window over all reward rules.
    pub fn max_schedule_window(&self) -> usize {
        self.rewards
            .iter()
            .flat_map(|r| r.overrides.iter().map(|o| o.final_k))
            .max()
            .unwrap_or(0)
    }

    /// Largest absolute reward that can ever be received.
    pub fn max_abs_reward(&self) -> f64 {
        self.rewards
            .iter()
            .flat_map(|r| std::iter::once(r.base).chain(r.overrides.iter().map(|o| o.value)))
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Draws a successor of `(from, action)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        from: &StateId,
        action: &ActionId,
        rng: &mut R,
    ) -> Result<StateId, MdpError> {
        let rule = self
            .rule(from, action)
            .ok_or_else(|| MdpError::UnknownTransition {
                state: from.to_string(),
                action: action.to_string(),
            })?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for o in &rule.outcomes {
            acc += o.prob;
            if u < acc {
                return Ok(o.to.clone());
            }
        }
        // u landed in the rounding gap above the cumulative sum
        Ok(rule
            .outcomes
            .iter()
            .rev()
            .find(|o| o.prob > 0.0)
            .unwrap_or(&rule.outcomes[rule.outcomes.len() - 1])
            .to
            .clone())
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn spec_hash(&self) -> String {
        let digest = Sha256::digest(self.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every structural invariant. An empty list means the spec is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();

        if self.states.is_empty() {
            v.push("no states declared".to_string());
        }
        let mut seen = BTreeSet::new();
        for s in &self.states {
            if s.as_str().is_empty() {
                v.push("empty state name".to_string());
            }
            if !seen.insert(s) {
                v.push(format!("state {s} declared twice"));
            }
        }
        for t in &self.terminals {
            if !self.has_state(t) {
                v.push(format!("terminal {t} is not a declared state"));
            }
        }
        if !self.has_state(&self.initial) {
            v.push(format!("initial state {} is not declared", self.initial));
        } else if self.is_terminal(&self.initial) {
            v.push(format!("initial state {} is terminal", self.initial));
        }
        if !(0.0..=1.0).contains(&self.discount) || !self.discount.is_finite() {
            v.push(format!("discount {} outside [0, 1]", self.discount));
        }

        for (s, acts) in &self.actions {
            if !self.has_state(s) {
                v.push(format!("actions declared for unknown state {s}"));
            }
            if self.is_terminal(s) {
                v.push(format!("terminal {s} has actions"));
            }
            if acts.is_empty() {
                v.push(format!("state {s} has no actions"));
            }
            let mut uniq = BTreeSet::new();
            for a in acts {
                if !uniq.insert(a) {
                    v.push(format!("action {a} declared twice for {s}"));
                }
            }
        }

        let mut seen_rules = BTreeSet::new();
        for rule in &self.transitions {
            let key = (&rule.from, &rule.action);
            if !seen_rules.insert(key) {
                v.push(format!("duplicate transition {} {}", rule.from, rule.action));
            }
            if self.is_terminal(&rule.from) {
                v.push(format!("terminal {} has transitions", rule.from));
                continue;
            }
            if !self.has_state(&rule.from) {
                v.push(format!("transition from unknown state {}", rule.from));
                continue;
            }
            if !self.actions_at(&rule.from).contains(&rule.action) {
                v.push(format!(
                    "transition {} {}: action not available",
                    rule.from, rule.action
                ));
            }
            let mut sum = 0.0;
            for o in &rule.outcomes {
                if !self.has_state(&o.to) {
                    v.push(format!(
                        "transition {} {}: unknown target {}",
                        rule.from, rule.action, o.to
                    ));
                }
                if !(0.0..=1.0).contains(&o.prob) || !o.prob.is_finite() {
                    v.push(format!(
                        "transition {} {}: probability {} outside [0, 1]",
                        rule.from, rule.action, o.prob
                    ));
                }
                sum += o.prob;
            }
            if (sum - 1.0).abs() > PROB_TOLERANCE {
                v.push(format!(
                    "transition {} {}: probabilities do not sum to 1 (sum = {sum})",
                    rule.from, rule.action
                ));
            }
        }
        for s in &self.states {
            if self.is_terminal(s) {
                continue;
            }
            if self.actions_at(s).is_empty() {
                v.push(format!("non-terminal {s} has no actions"));
            }
            for a in self.actions_at(s) {
                if self.rule(s, a).is_none() {
                    v.push(format!("missing transition for {s} {a}"));
                }
            }
        }

        let mut seen_rewards = BTreeSet::new();
        for r in &self.rewards {
            if !seen_rewards.insert(&r.entered) {
                v.push(format!("duplicate reward for {}", r.entered));
            }
            if !self.has_state(&r.entered) {
                v.push(format!("reward for unknown state {}", r.entered));
            }
            for o in &r.overrides {
                if o.final_k == 0 {
                    v.push(format!("reward for {}: empty schedule window", r.entered));
                }
            }
        }

        for (k, step) in self.script.iter().enumerate() {
            let n = k + 1;
            if k > 0 && self.script[k - 1].to != step.from {
                v.push(format!("script step {n} discontinuous"));
            }
            let p = self.rule(&step.from, &step.action).map_or(0.0, |r| r.prob_of(&step.to));
            if p <= 0.0 {
                v.push(format!("script step {n} unreachable"));
            }
        }
        if let Some(last) = self.script.last() {
            if !self.is_terminal(&last.to) {
                v.push("script does not end at a terminal".to_string());
            }
        }
        if let Some(ev) = &self.appraisal_event {
            if !self.script.contains(ev) {
                v.push(format!("appraisal event {ev} not in script"));
            }
        }

        v
    }
}

impl fmt::Display for MdpSpec {
    /// Canonical text form; parsing it yields an equal spec.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(" ");
        writeln!(f, "states: {}", join(&mut self.states.iter().map(|s| s.to_string())))?;
        if !self.terminals.is_empty() {
            // keep declaration order for readability
            let t = self
                .states
                .iter()
                .filter(|s| self.terminals.contains(*s))
                .chain(self.terminals.iter().filter(|t| !self.states.contains(t)))
                .map(|s| s.to_string());
            writeln!(f, "terminal: {}", t.collect::<Vec<_>>().join(" "))?;
        }
        writeln!(f, "initial: {}", self.initial)?;
        writeln!(f, "discount: {}", self.discount)?;
        for (s, acts) in &self.actions {
            let names = acts.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
            writeln!(f, "actions: {s} = {names}")?;
        }
        for rule in &self.transitions {
            let outs = rule
                .outcomes
                .iter()
                .map(|o| format!("{} {}", o.to, o.prob))
                .collect::<Vec<_>>()
                .join(", ");
            writeln!(f, "trans: {} {} -> {outs}", rule.from, rule.action)?;
        }
        for r in &self.rewards {
            write!(f, "reward: {} = {}", r.entered, r.base)?;
            for o in &r.overrides {
                write!(f, " | last {} = {}", o.final_k, o.value)?;
            }
            writeln!(f)?;
        }
        if let Some(ev) = &self.appraisal_event {
            writeln!(f, "appraise: {ev}")?;
        }
        if !self.script.is_empty() {
            let steps = self.script.iter().map(|s| s.to_string()).collect::<Vec<_>>();
            writeln!(f, "script: {}", steps.join(", "))?;
        }
        Ok(())
    }
}

impl FromStr for MdpSpec {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_mdp(s)
    }
}

/// Parses and validates an MDP document.
pub fn parse_mdp(text: &str) -> Result<MdpSpec, MdpError> {
    let spec = Parser::default().run(text)?;
    let violations = spec.validate();
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(MdpError::Invalid(violations))
    }
}

/// A token with its 1-based column.
#[derive(Clone, Copy, Debug)]
struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokens(s: &str, base_col: usize) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        if c.is_whitespace() || c == ',' {
            if let Some(b) = start.take() {
                out.push(Tok {
                    text: &s[b..i],
                    col: base_col + s[..b].chars().count(),
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(b) = start {
        out.push(Tok {
            text: &s[b..],
            col: base_col + s[..b].chars().count(),
        });
    }
    out
}

/// Splits `s` on `sep`, returning each piece with its starting column.
fn split_cols<'a>(s: &'a str, sep: char, base_col: usize) -> Vec<(&'a str, usize)> {
    let mut out = Vec::new();
    let mut begin = 0;
    for (i, c) in s.char_indices() {
        if c == sep {
            out.push((&s[begin..i], base_col + s[..begin].chars().count()));
            begin = i + c.len_utf8();
        }
    }
    out.push((&s[begin..], base_col + s[..begin].chars().count()));
    out
}

#[derive(Default)]
struct Parser {
    states: Option<Vec<StateId>>,
    terminals: Option<BTreeSet<StateId>>,
    initial: Option<StateId>,
    discount: Option<f64>,
    actions: BTreeMap<StateId, Vec<ActionId>>,
    transitions: Vec<TransitionRule>,
    rewards: Vec<RewardRule>,
    appraisal_event: Option<Step>,
    script: Option<Vec<Step>>,
    // deferred reference checks: (line, col, state)
    state_refs: Vec<(usize, StateId)>,
    action_refs: Vec<(usize, StateId, ActionId)>,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> MdpError {
    MdpError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn number(tok: Tok<'_>, line: usize) -> Result<f64, MdpError> {
    tok.text
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| syntax(line, tok.col, format!("expected a number, found `{}`", tok.text)))
}

impl Parser {
    fn run(mut self, text: &str) -> Result<MdpSpec, MdpError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let Some(colon) = content.find(':') else {
                let col = content.chars().take_while(|c| c.is_whitespace()).count() + 1;
                return Err(syntax(line, col, "expected `directive: ...`"));
            };
            let key = content[..colon].trim();
            let body = &content[colon + 1..];
            let body_col = content[..colon + 1].chars().count() + 1;
            self.directive(line, key, body, body_col)?;
        }
        self.finish()
    }

    fn directive(&mut self, line: usize, key: &str, body: &str, col: usize) -> Result<(), MdpError> {
        match key {
            "states" => {
                if self.states.is_some() {
                    return Err(MdpError::Duplicate { line, what: "states directive".into() });
                }
                let toks = tokens(body, col);
                if toks.is_empty() {
                    return Err(syntax(line, col, "expected at least one state"));
                }
                let mut list = Vec::new();
                for t in toks {
                    let id = StateId::new(t.text);
                    if list.contains(&id) {
                        return Err(MdpError::Duplicate { line, what: format!("state `{id}`") });
                    }
                    list.push(id);
                }
                self.states = Some(list);
            }
            "terminal" | "terminals" => {
                if self.terminals.is_some() {
                    return Err(MdpError::Duplicate { line, what: "terminal directive".into() });
                }
                let mut set = BTreeSet::new();
                for t in tokens(body, col) {
                    let id = StateId::new(t.text);
                    self.state_refs.push((line, id.clone()));
                    set.insert(id);
                }
                self.terminals = Some(set);
            }
            "initial" => {
                if self.initial.is_some() {
                    return Err(MdpError::Duplicate { line, what: "initial directive".into() });
                }
                let toks = tokens(body, col);
                match toks.as_slice() {
                    [t] => {
                        let id = StateId::new(t.text);
                        self.state_refs.push((line, id.clone()));
                        self.initial = Some(id);
                    }
                    [] => return Err(syntax(line, col, "expected a state")),
                    [_, extra, ..] => return Err(syntax(line, extra.col, "expected a single state")),
                }
            }
            "discount" => {
                if self.discount.is_some() {
                    return Err(MdpError::Duplicate { line, what: "discount directive".into() });
                }
                let toks = tokens(body, col);
                let [t] = toks.as_slice() else {
                    return Err(syntax(line, col, "expected a single number"));
                };
                self.discount = Some(number(*t, line)?);
            }
            "actions" => {
                let parts = split_cols(body, '=', col);
                let [(lhs, lcol), (rhs, rcol)] = parts.as_slice() else {
                    return Err(syntax(line, col, "expected `actions: STATE = a1 a2 ...`"));
                };
                let st = tokens(lhs, *lcol);
                let [s] = st.as_slice() else {
                    return Err(syntax(line, *lcol, "expected a single state before `=`"));
                };
                let state = StateId::new(s.text);
                self.state_refs.push((line, state.clone()));
                if self.actions.contains_key(&state) {
                    return Err(MdpError::Duplicate { line, what: format!("actions for `{state}`") });
                }
                let acts = tokens(rhs, *rcol);
                if acts.is_empty() {
                    return Err(syntax(line, *rcol, "expected at least one action"));
                }
                let mut list: Vec<ActionId> = Vec::new();
                for a in acts {
                    let id = ActionId::new(a.text);
                    if list.contains(&id) {
                        return Err(MdpError::Duplicate { line, what: format!("action `{id}` for `{state}`") });
                    }
                    list.push(id);
                }
                self.actions.insert(state, list);
            }
            "trans" | "transition" => {
                let Some(arrow) = body.find("->") else {
                    return Err(syntax(line, col, "expected `FROM ACTION -> TO [P], ...`"));
                };
                let lhs = tokens(&body[..arrow], col);
                let [from, action] = lhs.as_slice() else {
                    return Err(syntax(line, col, "expected `FROM ACTION` before `->`"));
                };
                let from = (StateId::new(from.text), from.col);
                let action = ActionId::new(action.text);
                let rhs_col = col + body[..arrow + 2].chars().count();
                let mut outcomes = Vec::new();
                for (piece, pcol) in split_cols(&body[arrow + 2..], ',', rhs_col) {
                    let toks = tokens(piece, pcol);
                    let (to, prob) = match toks.as_slice() {
                        [to] => (to, 1.0),
                        [to, p] => (to, number(*p, line)?),
                        [] => return Err(syntax(line, pcol, "empty outcome")),
                        [_, _, extra, ..] => return Err(syntax(line, extra.col, "unexpected token in outcome")),
                    };
                    let to = StateId::new(to.text);
                    if outcomes.iter().any(|o: &Outcome| o.to == to) {
                        return Err(MdpError::Duplicate { line, what: format!("outcome `{to}`") });
                    }
                    self.state_refs.push((line, to.clone()));
                    outcomes.push(Outcome { to, prob });
                }
                if self.transitions.iter().any(|r| r.from == from.0 && r.action == action) {
                    return Err(MdpError::Duplicate {
                        line,
                        what: format!("transition `{} {}`", from.0, action),
                    });
                }
                self.state_refs.push((line, from.0.clone()));
                self.action_refs.push((line, from.0.clone(), action.clone()));
                self.transitions.push(TransitionRule { from: from.0, action, outcomes });
            }
            "reward" => {
                let segments = split_cols(body, '|', col);
                let (head, hcol) = segments[0];
                let hp = split_cols(head, '=', hcol);
                let [(lhs, lcol), (rhs, rcol)] = hp.as_slice() else {
                    return Err(syntax(line, hcol, "expected `reward: STATE = VALUE`"));
                };
                let st = tokens(lhs, *lcol);
                let [s] = st.as_slice() else {
                    return Err(syntax(line, *lcol, "expected a single state before `=`"));
                };
                let vt = tokens(rhs, *rcol);
                let [v] = vt.as_slice() else {
                    return Err(syntax(line, *rcol, "expected a single reward value"));
                };
                let entered = StateId::new(s.text);
                let base = number(*v, line)?;
                let mut overrides = Vec::new();
                for &(seg, scol) in &segments[1..] {
                    let sp = split_cols(seg, '=', scol);
                    let [(when, wcol), (val, vcol)] = sp.as_slice() else {
                        return Err(syntax(line, scol, "expected `last K = VALUE`"));
                    };
                    let wt = tokens(when, *wcol);
                    let [kw, k] = wt.as_slice() else {
                        return Err(syntax(line, *wcol, "expected `last K`"));
                    };
                    if kw.text != "last" {
                        return Err(syntax(line, kw.col, format!("expected `last`, found `{}`", kw.text)));
                    }
                    let final_k: usize = k
                        .text
                        .parse()
                        .ok()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| syntax(line, k.col, "expected a positive episode count"))?;
                    let vt = tokens(val, *vcol);
                    let [v] = vt.as_slice() else {
                        return Err(syntax(line, *vcol, "expected a single reward value"));
                    };
                    if overrides.iter().any(|o: &RewardOverride| o.final_k == final_k) {
                        return Err(MdpError::Duplicate { line, what: format!("schedule window `last {final_k}`") });
                    }
                    overrides.push(RewardOverride { final_k, value: number(*v, line)? });
                }
                if self.rewards.iter().any(|r| r.entered == entered) {
                    return Err(MdpError::Duplicate { line, what: format!("reward for `{entered}`") });
                }
                self.state_refs.push((line, entered.clone()));
                self.rewards.push(RewardRule { entered, base, overrides });
            }
            "appraise" => {
                if self.appraisal_event.is_some() {
                    return Err(MdpError::Duplicate { line, what: "appraise directive".into() });
                }
                let step = self.step(line, body, col)?;
                self.appraisal_event = Some(step);
            }
            "script" => {
                if self.script.is_some() {
                    return Err(MdpError::Duplicate { line, what: "script directive".into() });
                }
                let mut steps = Vec::new();
                for (piece, pcol) in split_cols(body, ',', col) {
                    steps.push(self.step(line, piece, pcol)?);
                }
                self.script = Some(steps);
            }
            other => {
                return Err(syntax(line, 1, format!("unknown directive `{other}`")));
            }
        }
        Ok(())
    }

    fn step(&mut self, line: usize, text: &str, col: usize) -> Result<Step, MdpError> {
        let toks = tokens(text, col);
        let [from, action, to] = toks.as_slice() else {
            return Err(syntax(line, col, "expected `FROM ACTION TO`"));
        };
        let step = Step {
            from: StateId::new(from.text),
            action: ActionId::new(action.text),
            to: StateId::new(to.text),
        };
        self.state_refs.push((line, step.from.clone()));
        self.state_refs.push((line, step.to.clone()));
        self.action_refs.push((line, step.from.clone(), step.action.clone()));
        Ok(step)
    }

    fn finish(mut self) -> Result<MdpSpec, MdpError> {
        let missing = |what: &str| syntax(0, 0, format!("missing `{what}` directive"));
        let states = self.states.take().ok_or_else(|| missing("states"))?;
        let terminals = self.terminals.take().unwrap_or_default();
        let initial = self.initial.take().ok_or_else(|| missing("initial"))?;
        let discount = self.discount.unwrap_or(0.9);

        for (line, s) in &self.state_refs {
            if !states.contains(s) {
                return Err(MdpError::UndeclaredState { line: *line, name: s.to_string() });
            }
        }
        for s in &states {
            if !terminals.contains(s) && !self.actions.contains_key(s) {
                self.actions.insert(s.clone(), vec![ActionId::new(DEFAULT_ACTION)]);
            }
        }
        for (line, s, a) in &self.action_refs {
            let declared = self.actions.get(s).is_some_and(|acts| acts.contains(a));
            if !declared && !terminals.contains(s) {
                return Err(MdpError::UndeclaredAction {
                    line: *line,
                    state: s.to_string(),
                    action: a.to_string(),
                });
            }
        }

        Ok(MdpSpec {
            states,
            terminals,
            initial,
            discount,
            actions: self.actions,
            transitions: self.transitions,
            rewards: self.rewards,
            appraisal_event: self.appraisal_event,
            script: self.script.unwrap_or_default(),
        })
    }
}
