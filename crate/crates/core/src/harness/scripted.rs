//! Hand-written policies used to sanity-check the win conditions.

use std::collections::VecDeque;

use rand::Rng;

use crate::env::{Action, CtfEnv, GameState, Role};
use crate::error::Result;

/// Hop distance from every host to the critical server over up links;
/// `usize::MAX` when unreachable.
pub fn distance_to_flag(env: &CtfEnv, link_up: &[bool]) -> Vec<usize> {
    let t = env.topology();
    let mut dist = vec![usize::MAX; t.num_hosts()];
    let flag = t.critical_server();
    dist[flag] = 0;
    let mut queue = VecDeque::from([flag]);
    while let Some(h) = queue.pop_front() {
        for n in t.neighbors_with(h, link_up).expect("host id in range") {
            if dist[n] == usize::MAX {
                dist[n] = dist[h] + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Compromises the frontier host closest to the flag.
pub fn greedy_attacker(env: &CtfEnv, g: &GameState) -> Result<Action> {
    let dist = distance_to_flag(env, &g.link_up);
    let best = env
        .legal_actions(g, Role::Attacker)?
        .into_iter()
        .filter_map(|a| match a {
            Action::Compromise(h) => Some((dist[h], h)),
            _ => None,
        })
        .min();
    Ok(best.map_or(Action::NoOp, |(_, h)| Action::Compromise(h)))
}

/// Uniform over the attacker's legal actions, no-op included.
pub fn random_attacker<R: Rng + ?Sized>(env: &CtfEnv, g: &GameState, rng: &mut R) -> Result<Action> {
    let legal = env.legal_actions(g, Role::Attacker)?;
    Ok(legal[rng.gen_range(0..legal.len())])
}

pub fn noop(_: &CtfEnv, _: &GameState) -> Result<Action> {
    Ok(Action::NoOp)
}

/// Isolates the compromised host with live links that is closest to the
/// flag; no-op when every compromised host is already cut off.
pub fn isolate_on_sight_defender(env: &CtfEnv, g: &GameState) -> Result<Action> {
    let t = env.topology();
    let dist = distance_to_flag(env, &g.link_up);
    let target = g
        .compromised_hosts()
        .filter(|&h| h != t.critical_server())
        .filter(|&h| {
            t.incident_links(h)
                .expect("host id in range")
                .iter()
                .any(|&id| g.link_up[id])
        })
        .map(|h| (dist[h], h))
        .min();
    Ok(target.map_or(Action::NoOp, |(_, h)| Action::Isolate(h)))
}

/// Plays one game between two scripted policies.
pub fn play_scripted<A, D>(env: &CtfEnv, run_index: usize, mut attacker: A, mut defender: D) -> Result<GameState>
where
    A: FnMut(&CtfEnv, &GameState) -> Result<Action>,
    D: FnMut(&CtfEnv, &GameState) -> Result<Action>,
{
    let mut g = env.reset(run_index);
    while !g.is_terminal() {
        let a = attacker(env, &g)?;
        let d = defender(env, &g)?;
        g = env.step(&g, a, d)?.state;
    }
    Ok(g)
}
