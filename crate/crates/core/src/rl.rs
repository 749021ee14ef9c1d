//! Tabular Q-learning with ε-greedy exploration and a count-based world model.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{ActionId, MdpError, MdpSpec, StateId};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 0.1,
            episodes: 1000,
            max_steps: 50,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |what: &str| Err(RlError::Hyperparams(what.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlError {
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("non-finite value in Q update")]
    NonFinite,
    #[error("schedule window of {window} episodes exceeds the {episodes}-episode budget")]
    ScheduleTooLong { window: usize, episodes: usize },
    #[error("agent was trained on a different MDP (hash {found}, expected {expected})")]
    SpecMismatch { expected: String, found: String },
    #[error("MDP has no script to replay")]
    EmptyScript,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct QEntry {
    state: StateId,
    action: ActionId,
    value: f64,
}

/// Action values, zero for pairs never written.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<QEntry>", into = "Vec<QEntry>")]
pub struct QTable {
    values: BTreeMap<(StateId, ActionId), f64>,
}

impl From<Vec<QEntry>> for QTable {
    fn from(entries: Vec<QEntry>) -> Self {
        Self {
            values: entries
                .into_iter()
                .map(|e| ((e.state, e.action), e.value))
                .collect(),
        }
    }
}

impl From<QTable> for Vec<QEntry> {
    fn from(q: QTable) -> Self {
        q.values
            .into_iter()
            .map(|((state, action), value)| QEntry { state, action, value })
            .collect()
    }
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: &StateId, a: &ActionId) -> f64 {
        self.values
            .get(&(s.clone(), a.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, s: StateId, a: ActionId, v: f64) {
        self.values.insert((s, a), v);
    }

    /// max over `actions` of q(s, ·); 0 for an empty action set.
    pub fn max_value(&self, s: &StateId, actions: &[ActionId]) -> f64 {
        actions
            .iter()
            .map(|a| self.get(s, a))
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    /// First action with the largest value.
    pub fn greedy<'a>(&self, s: &StateId, actions: &'a [ActionId]) -> Option<&'a ActionId> {
        let mut best: Option<(&ActionId, f64)> = None;
        for a in actions {
            let v = self.get(s, a);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
        best.map(|(a, _)| a)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&StateId, &ActionId, f64)> {
        self.values.iter().map(|((s, a), v)| (s, a, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CountEntry {
    from: StateId,
    action: ActionId,
    to: StateId,
    count: u64,
}

/// Transition counts observed during training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<CountEntry>", into = "Vec<CountEntry>")]
pub struct WorldModel {
    counts: BTreeMap<(StateId, ActionId, StateId), u64>,
}

impl From<Vec<CountEntry>> for WorldModel {
    fn from(entries: Vec<CountEntry>) -> Self {
        Self {
            counts: entries
                .into_iter()
                .map(|e| ((e.from, e.action, e.to), e.count))
                .collect(),
        }
    }
}

impl From<WorldModel> for Vec<CountEntry> {
    fn from(w: WorldModel) -> Self {
        w.counts
            .into_iter()
            .map(|((from, action, to), count)| CountEntry { from, action, to, count })
            .collect()
    }
}

impl WorldModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, from: &StateId, action: &ActionId, to: &StateId) -> u64 {
        self.counts
            .get(&(from.clone(), action.clone(), to.clone()))
            .copied()
            .unwrap_or(0)
    }

    /// Σ over successors of count(from, action, ·).
    pub fn total(&self, from: &StateId, action: &ActionId) -> u64 {
        self.counts
            .iter()
            .filter(|((f, a, _), _)| f == from && a == action)
            .map(|(_, c)| *c)
            .sum()
    }

    /// Empirical successor frequencies of `(from, action)`.
    pub fn frequencies(&self, from: &StateId, action: &ActionId) -> Vec<(StateId, f64)> {
        let total = self.total(from, action);
        if total == 0 {
            return Vec::new();
        }
        self.counts
            .iter()
            .filter(|((f, a, _), _)| f == from && a == action)
            .map(|((_, _, to), c)| (to.clone(), *c as f64 / total as f64))
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&StateId, &ActionId, &StateId, u64)> {
        self.counts.iter().map(|((f, a, t), c)| (f, a, t, *c))
    }
}

/// One observed `(s, a, s', r)` step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub from: StateId,
    pub action: ActionId,
    pub to: StateId,
    pub reward: f64,
    pub episode: usize,
}

/// Applies one Q-learning step and returns the change made to q(s, a).
/// `next_actions` is empty when `event.to` is terminal.
pub fn q_update(
    q: &mut QTable,
    event: &TransitionEvent,
    next_actions: &[ActionId],
    alpha: f64,
    gamma: f64,
) -> Result<f64, RlError> {
    let old = q.get(&event.from, &event.action);
    let target = event.reward + gamma * q.max_value(&event.to, next_actions);
    let delta = alpha * (target - old);
    if !delta.is_finite() || !alpha.is_finite() || !gamma.is_finite() {
        return Err(RlError::NonFinite);
    }
    q.set(event.from.clone(), event.action.clone(), old + delta);
    Ok(delta)
}

/// ε-greedy choice; greedy ties go to the first declared action.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    s: &StateId,
    actions: &[ActionId],
    epsilon: f64,
    rng: &mut R,
) -> ActionId {
    assert!(!actions.is_empty(), "select_action needs at least one action");
    if rng.random::<f64>() < epsilon {
        actions[rng.random_range(0..actions.len())].clone()
    } else {
        q.greedy(s, actions).expect("non-empty").clone()
    }
}

pub fn observe(world: &mut WorldModel, event: &TransitionEvent) {
    *world
        .counts
        .entry((event.from.clone(), event.action.clone(), event.to.clone()))
        .or_insert(0) += 1;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub episodes: usize,
    pub steps: usize,
    pub truncated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedAgent {
    pub q: QTable,
    pub world: WorldModel,
    pub spec_hash: String,
    pub hyper: Hyperparams,
    pub stats: TrainingStats,
}

impl TrainedAgent {
    pub fn check_spec(&self, spec: &MdpSpec) -> Result<(), RlError> {
        let expected = spec.spec_hash();
        if expected != self.spec_hash {
            return Err(RlError::SpecMismatch { expected, found: self.spec_hash.clone() });
        }
        Ok(())
    }
}

/// Runs `hyper.episodes` episodes of Q-learning from the initial state.
pub fn train(spec: &MdpSpec, hyper: &Hyperparams) -> Result<TrainedAgent, RlError> {
    hyper.validate()?;
    let window = spec.max_schedule_window();
    if window > hyper.episodes {
        return Err(RlError::ScheduleTooLong { window, episodes: hyper.episodes });
    }
    let mut rng = seed::rng(hyper.seed);
    let mut q = QTable::new();
    let mut world = WorldModel::new();
    let mut stats = TrainingStats { episodes: hyper.episodes, ..Default::default() };

    for episode in 0..hyper.episodes {
        let mut s = spec.initial.clone();
        let mut done = false;
        for _ in 0..hyper.max_steps {
            let a = select_action(&q, &s, spec.actions_at(&s), hyper.epsilon, &mut rng);
            let to = spec.sample_transition(&s, &a, &mut rng)?;
            let reward = spec.reward_at(episode, hyper.episodes, &to);
            let event = TransitionEvent { from: s, action: a, to, reward, episode };
            q_update(&mut q, &event, spec.actions_at(&event.to), hyper.alpha, spec.discount)?;
            observe(&mut world, &event);
            stats.steps += 1;
            s = event.to;
            if spec.is_terminal(&s) {
                done = true;
                break;
            }
        }
        if !done {
            stats.truncated += 1;
        }
    }

    Ok(TrainedAgent { q, world, spec_hash: spec.spec_hash(), hyper: hyper.clone(), stats })
}

/// Trains, or reuses a cached agent from `cache_dir` when one exists for the
/// same spec and hyperparameters.
pub fn train_cached(
    spec: &MdpSpec,
    hyper: &Hyperparams,
    cache_dir: Option<&Path>,
) -> crate::Result<TrainedAgent> {
    let Some(dir) = cache_dir else {
        return Ok(train(spec, hyper)?);
    };
    let key = seed::derive(
        seed::derive(hyper.seed, &spec.spec_hash()),
        &serde_json::to_string(hyper)?,
    );
    let path = dir.join(format!("agent-{key:016x}.json"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(agent) = serde_json::from_str::<TrainedAgent>(&text) {
            if agent.spec_hash == spec.spec_hash() && &agent.hyper == hyper {
                return Ok(agent);
            }
        }
    }
    let agent = train(spec, hyper)?;
    std::fs::create_dir_all(dir).map_err(crate::io_err(dir))?;
    // write-then-rename so concurrent runs never read a partial file
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let tmp = dir.join(format!(
        ".agent-{key:016x}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, serde_json::to_string(&agent)?).map_err(crate::io_err(&tmp))?;
    std::fs::rename(&tmp, &path).map_err(crate::io_err(&path))?;
    Ok(agent)
}

/// Events along the scripted test path, with post-training rewards. The
/// agent is not modified.
pub fn replay_script(agent: &TrainedAgent, spec: &MdpSpec) -> Result<Vec<TransitionEvent>, RlError> {
    agent.check_spec(spec)?;
    if spec.script.is_empty() {
        return Err(RlError::EmptyScript);
    }
    Ok(spec
        .script
        .iter()
        .map(|step| TransitionEvent {
            from: step.from.clone(),
            action: step.action.clone(),
            to: step.to.clone(),
            reward: spec.final_reward(&step.to),
            episode: agent.hyper.episodes,
        })
        .collect())
}
