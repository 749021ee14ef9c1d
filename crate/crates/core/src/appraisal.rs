//! The four appraisal checks, read off a frozen agent at one event.

use serde::{Deserialize, Serialize};

use crate::mdp::{ActionId, MdpSpec, StateId, Step};
use crate::rl::{replay_script, QTable, RlError, TrainedAgent, TransitionEvent, WorldModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AppraisalVector {
    pub suddenness: f64,
    pub goal_relevance: f64,
    pub conduciveness: f64,
    pub power: f64,
}

impl AppraisalVector {
    pub const DIM: usize = 4;

    pub fn new(suddenness: f64, goal_relevance: f64, conduciveness: f64, power: f64) -> Self {
        Self { suddenness, goal_relevance, conduciveness, power }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.suddenness, self.goal_relevance, self.conduciveness, self.power]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn in_unit_box(&self) -> bool {
        self.to_array().iter().all(|x| (0.0..=1.0).contains(x))
    }
}

impl From<[f64; 4]> for AppraisalVector {
    fn from(a: [f64; 4]) -> Self {
        Self::from_array(a)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AppraisalError {
    #[error("unvisited state-action ({state}, {action})")]
    Unvisited { state: String, action: String },
    #[error("MDP declares no appraisal event")]
    NoEvent,
    #[error("appraisal event {0} is not on the scripted path")]
    EventNotInScript(String),
    #[error(transparent)]
    Rl(#[from] RlError),
}

/// Options for reading the checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppraisalOptions {
    /// Multiplier applied to the TD error before goal relevance and
    /// conduciveness are computed. 1 uses the raw TD error; the learning
    /// rate gives the α-scaled variant.
    pub td_scale: f64,
}

impl Default for AppraisalOptions {
    fn default() -> Self {
        Self { td_scale: 1.0 }
    }
}

/// 1 − empirical frequency of `to` after `(from, action)`.
pub fn suddenness(
    world: &WorldModel,
    from: &StateId,
    action: &ActionId,
    to: &StateId,
) -> Result<f64, AppraisalError> {
    let total = world.total(from, action);
    if total == 0 {
        return Err(AppraisalError::Unvisited { state: from.to_string(), action: action.to_string() });
    }
    Ok(1.0 - world.count(from, action, to) as f64 / total as f64)
}

/// TD errors smaller than this are treated as exactly zero when appraising.
pub const TD_ZERO: f64 = 1e-12;

/// `scale · [r + γ·max q(s', ·) − q(s, a)]`; the max over an empty action set is 0.
pub fn td_error(q: &QTable, event: &TransitionEvent, next_actions: &[ActionId], gamma: f64, scale: f64) -> f64 {
    scale * (event.reward + gamma * q.max_value(&event.to, next_actions) - q.get(&event.from, &event.action))
}

pub fn goal_relevance(delta: f64) -> f64 {
    delta.abs().min(1.0)
}

pub fn conduciveness(delta: f64) -> f64 {
    delta.clamp(-1.0, 1.0) * 0.5 + 0.5
}

/// Mean minus minimum of q(to, ·), clamped to [0, 1]. Zero without a choice.
pub fn power(q: &QTable, to: &StateId, actions_at_to: &[ActionId], terminal: bool) -> f64 {
    if terminal || actions_at_to.len() <= 1 {
        return 0.0;
    }
    let vals: Vec<f64> = actions_at_to.iter().map(|a| q.get(to, a)).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    (mean - min).clamp(0.0, 1.0)
}

/// Appraisal at one event together with the TD error it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventAppraisal {
    pub event: TransitionEvent,
    pub td_error: f64,
    pub vector: AppraisalVector,
}

/// Computes all four checks at `event` on the frozen agent.
pub fn appraise_event(
    agent: &TrainedAgent,
    spec: &MdpSpec,
    event: &TransitionEvent,
    opts: &AppraisalOptions,
) -> Result<EventAppraisal, AppraisalError> {
    let next_actions = spec.actions_at(&event.to);
    let delta = td_error(&agent.q, event, next_actions, spec.discount, opts.td_scale);
    // round-off from converged sums counts as a perfect match
    let delta = if delta.abs() < TD_ZERO { 0.0 } else { delta };
    let vector = AppraisalVector {
        suddenness: suddenness(&agent.world, &event.from, &event.action, &event.to)?,
        goal_relevance: goal_relevance(delta),
        conduciveness: conduciveness(delta),
        power: power(&agent.q, &event.to, next_actions, spec.is_terminal(&event.to)),
    };
    Ok(EventAppraisal { event: event.clone(), td_error: delta, vector })
}

/// Replays the script and appraises the designated event.
pub fn appraise_detailed(
    agent: &TrainedAgent,
    spec: &MdpSpec,
    opts: &AppraisalOptions,
) -> Result<EventAppraisal, AppraisalError> {
    let target: &Step = spec.appraisal_event.as_ref().ok_or(AppraisalError::NoEvent)?;
    let events = replay_script(agent, spec)?;
    let event = events
        .iter()
        .find(|e| e.from == target.from && e.action == target.action && e.to == target.to)
        .ok_or_else(|| AppraisalError::EventNotInScript(target.to_string()))?;
    appraise_event(agent, spec, event, opts)
}

pub fn appraise(agent: &TrainedAgent, spec: &MdpSpec, opts: &AppraisalOptions) -> Result<AppraisalVector, AppraisalError> {
    appraise_detailed(agent, spec, opts).map(|a| a.vector)
}
