#![allow(dead_code)]

use std::collections::BTreeMap;

use appraise_rl::mdp::{ActionId, MdpSpec, StateId};
use appraise_rl::rl::TrainedAgent;
use nalgebra::{DMatrix, DVector};

/// Expected one-step return of `a` at `s` under `v`, with post-training rewards.
pub fn q_from_values(spec: &MdpSpec, v: &BTreeMap<StateId, f64>, s: &StateId, a: &ActionId) -> f64 {
    let rule = spec.rule(s, a).expect("rule");
    rule.outcomes
        .iter()
        .map(|o| {
            let next = if spec.is_terminal(&o.to) { 0.0 } else { v[&o.to] };
            o.prob * (spec.final_reward(&o.to) + spec.discount * next)
        })
        .sum()
}

fn non_terminals(spec: &MdpSpec) -> Vec<StateId> {
    spec.states.iter().filter(|s| !spec.is_terminal(s) && spec.rule(s, &spec.actions_at(s)[0]).is_some()).cloned().collect()
}

/// Exact optimal state values by value iteration.
pub fn value_iteration(spec: &MdpSpec) -> BTreeMap<StateId, f64> {
    let states = non_terminals(spec);
    let mut v: BTreeMap<StateId, f64> = states.iter().map(|s| (s.clone(), 0.0)).collect();
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        let mut next = v.clone();
        for s in &states {
            let best = spec
                .actions_at(s)
                .iter()
                .map(|a| q_from_values(spec, &v, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            change = change.max((best - v[s]).abs());
            next.insert(s.clone(), best);
        }
        v = next;
        if change < 1e-12 {
            break;
        }
    }
    v
}

/// Exact value of a deterministic policy.
pub fn policy_values(spec: &MdpSpec, policy: &BTreeMap<StateId, ActionId>) -> BTreeMap<StateId, f64> {
    let states = non_terminals(spec);
    let mut v: BTreeMap<StateId, f64> = states.iter().map(|s| (s.clone(), 0.0)).collect();
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        let mut next = v.clone();
        for s in &states {
            let val = q_from_values(spec, &v, s, &policy[s]);
            change = change.max((val - v[s]).abs());
            next.insert(s.clone(), val);
        }
        v = next;
        if change < 1e-12 {
            break;
        }
    }
    v
}

/// Greedy policy of the learned table, first declared action on ties.
pub fn greedy_policy(spec: &MdpSpec, agent: &TrainedAgent) -> BTreeMap<StateId, ActionId> {
    non_terminals(spec)
        .into_iter()
        .map(|s| {
            let a = agent.q.greedy(&s, spec.actions_at(&s)).expect("actions").clone();
            (s, a)
        })
        .collect()
}

/// Global minimum of ½αᵀQα − Σα subject to yᵀα = 0, 0 ≤ α ≤ c, found by
/// enumerating every assignment of variables to {0, c, free} and solving
/// the KKT system on the free set. Returns (objective, α).
pub fn brute_force_qp(k: &[Vec<f64>], y: &[f64], c: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    let objective = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += 0.5 * a[i] * a[j] * q(i, j);
            }
        }
        s - a.iter().sum::<f64>()
    };
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut kinds = vec![0u8; n];
        let mut x = code;
        for kind in kinds.iter_mut() {
            *kind = (x % 3) as u8;
            x /= 3;
        }
        let mut alpha: Vec<f64> = kinds.iter().map(|&t| if t == 1 { c } else { 0.0 }).collect();
        let free: Vec<usize> = (0..n).filter(|&i| kinds[i] == 2).collect();
        if !free.is_empty() {
            let m = free.len();
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut b = DVector::<f64>::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (col, &j) in free.iter().enumerate() {
                    a[(r, col)] = q(i, j);
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                b[r] = 1.0 - (0..n).filter(|j| kinds[*j] != 2).map(|j| q(i, j) * alpha[j]).sum::<f64>();
            }
            b[m] = -(0..n).filter(|j| kinds[*j] != 2).map(|j| y[j] * alpha[j]).sum::<f64>();
            let Some(sol) = a.lu().solve(&b) else { continue };
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r];
            }
        }
        let feasible = alpha.iter().all(|&v| v >= -1e-12 && v <= c + 1e-12)
            && alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs() < 1e-9;
        if feasible {
            let obj = objective(&alpha);
            if obj < best.0 {
                best = (obj, alpha);
            }
        }
    }
    best
}
