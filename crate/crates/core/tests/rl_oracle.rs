mod common;

use appraise_rl::assets;
use appraise_rl::mdp::{ActionId, StateId};
use appraise_rl::rl::{q_update, train, Hyperparams, QTable, TransitionEvent};
use proptest::prelude::*;

#[test]
fn greedy_values_match_value_iteration_on_every_bundled_mdp() {
    for name in assets::mdp_names() {
        let spec = assets::load_mdp(name).unwrap();
        let agent = train(&spec, &Hyperparams::default()).unwrap();
        let optimal = common::value_iteration(&spec);
        let learned = common::policy_values(&spec, &common::greedy_policy(&spec, &agent));
        let tol = 0.05 * spec.max_abs_reward();
        for (s, v) in &optimal {
            assert!((learned[s] - v).abs() <= tol, "{name} {s}: greedy {} vs optimal {v}", learned[s]);
        }
    }
}

#[test]
fn pride_prefers_the_usual_route() {
    let spec = assets::load_mdp("pride").unwrap();
    let v = common::value_iteration(&spec);
    let s1 = StateId::from("S1");
    let q1 = common::q_from_values(&spec, &v, &s1, &ActionId::from("a1"));
    let q2 = common::q_from_values(&spec, &v, &s1, &ActionId::from("a2"));
    // a1: 5; a2: −5 + 0.9 · 7.5
    assert!((q1 - 5.0).abs() < 1e-9 && (q2 - 1.75).abs() < 1e-9);
    let agent = train(&spec, &Hyperparams::default()).unwrap();
    let actions = spec.actions_at(&s1);
    assert_eq!(agent.q.greedy(&s1, actions).unwrap().as_str(), "a1");
}

#[test]
fn fear_world_model_frequency() {
    let spec = assets::load_mdp("fear").unwrap();
    let agent = train(&spec, &Hyperparams::default()).unwrap();
    let (s1, frwd) = (StateId::from("S1"), ActionId::from("frwd"));
    let n = agent.world.total(&s1, &frwd) as f64;
    let p = agent.world.count(&s1, &frwd, &StateId::from("P")) as f64 / n;
    assert!((p - 0.2).abs() <= 0.03, "{p}");
}

#[test]
fn world_model_frequencies_concentrate() {
    for name in assets::mdp_names() {
        let spec = assets::load_mdp(name).unwrap();
        let agent = train(&spec, &Hyperparams { episodes: 4000, ..Default::default() }).unwrap();
        for rule in &spec.transitions {
            let n = agent.world.total(&rule.from, &rule.action);
            if n < 500 {
                continue;
            }
            for o in &rule.outcomes {
                let f = agent.world.count(&rule.from, &rule.action, &o.to) as f64 / n as f64;
                let bound = 3.0 * (o.prob * (1.0 - o.prob) / n as f64).sqrt();
                assert!((f - o.prob).abs() <= bound.max(1e-12), "{name} {} {} {}: {f} vs {}", rule.from, rule.action, o.to, o.prob);
            }
        }
    }
}

#[test]
fn training_is_bit_identical_for_equal_inputs() {
    for name in ["pride", "shame", "rage"] {
        let spec = assets::load_mdp(name).unwrap();
        let h = Hyperparams { seed: 42, ..Default::default() };
        let a = serde_json::to_string(&train(&spec, &h).unwrap()).unwrap();
        let b = serde_json::to_string(&train(&spec, &h).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

fn state(i: u8) -> StateId {
    StateId::new(format!("S{i}"))
}

fn action(i: u8) -> ActionId {
    ActionId::new(format!("a{i}"))
}

proptest! {
    #[test]
    fn q_update_changes_only_its_cell(
        cells in proptest::collection::vec((0u8..4, 0u8..3, -10.0f64..10.0), 0..12),
        from in 0u8..4, act in 0u8..3, to in 0u8..4,
        reward in -10.0f64..10.0, alpha in 0.01f64..1.0, gamma in 0.0f64..1.0,
    ) {
        let mut q = QTable::new();
        for (s, a, v) in &cells {
            q.set(state(*s), action(*a), *v);
        }
        let before: Vec<_> = q.entries().map(|(s, a, v)| (s.clone(), a.clone(), v)).collect();
        let event = TransitionEvent { from: state(from), action: action(act), to: state(to), reward, episode: 0 };
        let next = [action(0), action(1), action(2)];
        let old = q.get(&event.from, &event.action);
        let delta = q_update(&mut q, &event, &next, alpha, gamma).unwrap();
        prop_assert!((q.get(&event.from, &event.action) - (old + delta)).abs() < 1e-12);
        for (s, a, v) in before {
            if s != event.from || a != event.action {
                prop_assert_eq!(q.get(&s, &a), v);
            }
        }
    }
}
