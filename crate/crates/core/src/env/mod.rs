//! Two-player capture-the-flag game played over a [`Topology`].
//!
//! One turn is an attacker move followed by a defender move. The observation
//! handed to both learners is the node-compromise bits (host-id order)
//! followed by the link-up bits (link-id order); on the default topology
//! that is 32 + 48 = 80 binary entries.

mod log;

pub use log::{replay, ActionLog, LoggedAction};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{HostId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Attacker,
    Defender,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Attacker => "attacker",
            Role::Defender => "defender",
        }
    }

    pub fn opponent(self) -> Role {
        match self {
            Role::Attacker => Role::Defender,
            Role::Defender => Role::Attacker,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attacker" => Ok(Role::Attacker),
            "defender" => Ok(Role::Defender),
            other => Err(Error::Domain(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    NoOp,
    Compromise(HostId),
    Isolate(HostId),
    Restore(HostId),
    Patch(HostId),
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::NoOp => "no-op",
            Action::Compromise(_) => "compromise",
            Action::Isolate(_) => "isolate",
            Action::Restore(_) => "restore",
            Action::Patch(_) => "patch",
        }
    }

    pub fn host(&self) -> Option<HostId> {
        match *self {
            Action::NoOp => None,
            Action::Compromise(h) | Action::Isolate(h) | Action::Restore(h) | Action::Patch(h) => {
                Some(h)
            }
        }
    }

    pub fn from_parts(kind: &str, host: Option<HostId>) -> Result<Action> {
        let need = |h: Option<HostId>| {
            h.ok_or_else(|| Error::Domain(format!("action {kind:?} needs a host")))
        };
        match kind {
            "no-op" => Ok(Action::NoOp),
            "compromise" => Ok(Action::Compromise(need(host)?)),
            "isolate" => Ok(Action::Isolate(need(host)?)),
            "restore" => Ok(Action::Restore(need(host)?)),
            "patch" => Ok(Action::Patch(need(host)?)),
            other => Err(Error::Domain(format!("unknown action kind {other:?}"))),
        }
    }
}

/// Fixed-width index space for one role's actions.
///
/// Attacker: `0` = no-op, `1 + h` = compromise(h).
/// Defender: `0` = no-op, then isolate, restore and patch blocks of
/// `num_hosts` entries each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub role: Role,
    pub num_hosts: usize,
}

impl ActionSpace {
    pub fn new(role: Role, num_hosts: usize) -> Self {
        ActionSpace { role, num_hosts }
    }

    pub fn size(&self) -> usize {
        match self.role {
            Role::Attacker => 1 + self.num_hosts,
            Role::Defender => 1 + 3 * self.num_hosts,
        }
    }

    pub fn action(&self, index: usize) -> Result<Action> {
        let n = self.num_hosts;
        if index >= self.size() {
            return Err(Error::Domain(format!(
                "action index {index} outside {} space of size {}",
                self.role,
                self.size()
            )));
        }
        if index == 0 {
            return Ok(Action::NoOp);
        }
        let i = index - 1;
        Ok(match self.role {
            Role::Attacker => Action::Compromise(i),
            Role::Defender => match i / n {
                0 => Action::Isolate(i % n),
                1 => Action::Restore(i % n),
                _ => Action::Patch(i % n),
            },
        })
    }

    pub fn index(&self, action: Action) -> Result<usize> {
        let n = self.num_hosts;
        let bad = || Error::Domain(format!("{action:?} is not a {} action", self.role));
        if let Some(h) = action.host() {
            if h >= n {
                return Err(Error::UnknownHost(h));
            }
        }
        match (self.role, action) {
            (_, Action::NoOp) => Ok(0),
            (Role::Attacker, Action::Compromise(h)) => Ok(1 + h),
            (Role::Defender, Action::Isolate(h)) => Ok(1 + h),
            (Role::Defender, Action::Restore(h)) => Ok(1 + n + h),
            (Role::Defender, Action::Patch(h)) => Ok(1 + 2 * n + h),
            _ => Err(bad()),
        }
    }
}

/// Binary observation vector: node bits then link bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    bits: Vec<u8>,
    num_hosts: usize,
}

impl Observation {
    pub fn from_bits(bits: Vec<u8>, num_hosts: usize) -> Result<Self> {
        if num_hosts > bits.len() {
            return Err(Error::DimensionMismatch {
                expected: num_hosts,
                actual: bits.len(),
            });
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Domain(format!("non-binary observation entry {b}")));
        }
        Ok(Observation { bits, num_hosts })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn num_hosts(&self) -> usize {
        self.num_hosts
    }

    pub fn node_bits(&self) -> &[u8] {
        &self.bits[..self.num_hosts]
    }

    pub fn link_bits(&self) -> &[u8] {
        &self.bits[self.num_hosts..]
    }

    pub fn is_compromised(&self, h: HostId) -> bool {
        self.bits[h] == 1
    }

    pub fn link_flags(&self) -> Vec<bool> {
        self.link_bits().iter().map(|&b| b == 1).collect()
    }

    /// Flips the compromise bit of host `h`.
    pub fn flip_node(&mut self, h: HostId) -> Result<()> {
        if h >= self.num_hosts {
            return Err(Error::UnknownHost(h));
        }
        self.bits[h] ^= 1;
        Ok(())
    }

    pub fn to_input(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    /// Number of differing node bits and differing link bits.
    pub fn hamming(&self, other: &Observation) -> (usize, usize) {
        let diff = |a: &[u8], b: &[u8]| a.iter().zip(b).filter(|(x, y)| x != y).count();
        (
            diff(self.node_bits(), other.node_bits()),
            diff(self.link_bits(), other.link_bits()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GameState {
    pub node_compromised: Vec<bool>,
    pub link_up: Vec<bool>,
    pub turn: u32,
    pub winner: Option<Role>,
}

impl GameState {
    pub fn is_terminal(&self) -> bool {
        self.winner.is_some()
    }

    pub fn compromised_hosts(&self) -> impl Iterator<Item = HostId> + '_ {
        self.node_compromised
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(h, _)| h)
    }
}

pub fn encode_state(g: &GameState) -> Observation {
    let bits = g
        .node_compromised
        .iter()
        .chain(&g.link_up)
        .map(|&b| u8::from(b))
        .collect();
    Observation {
        bits,
        num_hosts: g.node_compromised.len(),
    }
}

/// Splits an observation back into (node flags, link flags).
pub fn decode_state(obs: &Observation) -> (Vec<bool>, Vec<bool>) {
    (
        obs.node_bits().iter().map(|&b| b == 1).collect(),
        obs.link_flags(),
    )
}

/// One stored transition. `next_mask` is the acting role's legal-action
/// mask in `next_state`, used for bootstrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_state: Observation,
    pub terminal: bool,
    pub next_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub flag_capture_reward: f64,
    pub attacker_eliminated_reward: f64,
    pub per_step_cost: f64,
    pub invalid_action_penalty: f64,
    pub collateral_isolation_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            flag_capture_reward: 100.0,
            attacker_eliminated_reward: 100.0,
            per_step_cost: 0.1,
            invalid_action_penalty: 1.0,
            collateral_isolation_penalty: 0.5,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.flag_capture_reward,
            self.attacker_eliminated_reward,
            self.per_step_cost,
            self.invalid_action_penalty,
            self.collateral_isolation_penalty,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("reward values must be finite".into()));
        }
        if self.flag_capture_reward <= 0.0 {
            return Err(Error::Config("flag_capture_reward must be positive".into()));
        }
        if self.per_step_cost < 0.0 {
            return Err(Error::Config("per_step_cost must be non-negative".into()));
        }
        Ok(())
    }
}

/// Result of one [`CtfEnv::step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: GameState,
    pub attacker: Experience,
    pub defender: Experience,
}

/// Winner under the game rules: capture first, then elimination, then
/// outlasting the turn limit.
pub fn check_winner(g: &GameState, turn_limit: u32, t: &Topology) -> Option<Role> {
    if g.node_compromised[t.critical_server()] {
        return Some(Role::Attacker);
    }
    if attacker_eliminated(&g.node_compromised, &g.link_up, t) {
        return Some(Role::Defender);
    }
    if g.turn >= turn_limit {
        return Some(Role::Defender);
    }
    None
}

/// True when no host is compromised or every compromised host has all of
/// its links down.
fn attacker_eliminated(nodes: &[bool], link_up: &[bool], t: &Topology) -> bool {
    nodes.iter().enumerate().filter(|(_, &c)| c).all(|(h, _)| {
        t.incident_links(h)
            .expect("host id in range")
            .iter()
            .all(|&id| !link_up[id])
    })
}

/// Uncompromised hosts adjacent over an up link to a compromised host.
fn frontier(nodes: &[bool], link_up: &[bool], t: &Topology) -> Vec<bool> {
    let mut out = vec![false; nodes.len()];
    for (id, link) in t.links().iter().enumerate() {
        if !link_up[id] {
            continue;
        }
        if nodes[link.a] && !nodes[link.b] {
            out[link.b] = true;
        }
        if nodes[link.b] && !nodes[link.a] {
            out[link.a] = true;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtfEnv {
    topology: Topology,
    rewards: RewardConfig,
    turn_limit: u32,
}

impl CtfEnv {
    pub fn new(topology: Topology, rewards: RewardConfig, turn_limit: u32) -> Result<Self> {
        rewards.validate()?;
        if turn_limit == 0 {
            return Err(Error::Config("turn limit must be positive".into()));
        }
        Ok(CtfEnv {
            topology,
            rewards,
            turn_limit,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn rewards(&self) -> &RewardConfig {
        &self.rewards
    }

    pub fn turn_limit(&self) -> u32 {
        self.turn_limit
    }

    pub fn action_space(&self, role: Role) -> ActionSpace {
        ActionSpace::new(role, self.topology.num_hosts())
    }

    pub fn observation_len(&self) -> usize {
        self.topology.num_hosts() + self.topology.num_links()
    }

    /// Fresh game: all links up and one entry point compromised, chosen
    /// round-robin by `run_index`.
    pub fn reset(&self, run_index: usize) -> GameState {
        let t = &self.topology;
        let mut node_compromised = vec![false; t.num_hosts()];
        let entries = t.entry_points();
        if !entries.is_empty() {
            node_compromised[entries[run_index % entries.len()]] = true;
        }
        GameState {
            node_compromised,
            link_up: vec![true; t.num_links()],
            turn: 0,
            winner: None,
        }
    }

    pub fn check_winner(&self, g: &GameState) -> Option<Role> {
        check_winner(g, self.turn_limit, &self.topology)
    }

    pub fn legal_actions(&self, g: &GameState, role: Role) -> Result<Vec<Action>> {
        if g.is_terminal() {
            return Err(Error::Contract("legal actions requested on a finished game".into()));
        }
        let space = self.action_space(role);
        let mask = self.legal_mask_for(&g.node_compromised, &g.link_up, role);
        mask.iter()
            .enumerate()
            .filter(|(_, &ok)| ok)
            .map(|(i, _)| space.action(i))
            .collect()
    }

    /// Legal-action mask over the role's full action space, read from an
    /// observation.
    pub fn legal_mask(&self, obs: &Observation, role: Role) -> Vec<bool> {
        let (nodes, links) = decode_state(obs);
        self.legal_mask_for(&nodes, &links, role)
    }

    fn legal_mask_for(&self, nodes: &[bool], link_up: &[bool], role: Role) -> Vec<bool> {
        let space = self.action_space(role);
        let n = self.topology.num_hosts();
        let mut mask = vec![false; space.size()];
        mask[0] = true;
        match role {
            Role::Attacker => {
                for (h, open) in frontier(nodes, link_up, &self.topology).into_iter().enumerate() {
                    mask[1 + h] = open;
                }
            }
            Role::Defender => {
                mask[1..].iter_mut().for_each(|m| *m = true);
                mask[1 + self.topology.critical_server()] = false;
                debug_assert_eq!(mask.len(), 1 + 3 * n);
            }
        }
        mask
    }

    fn is_legal(&self, nodes: &[bool], link_up: &[bool], role: Role, action: Action) -> bool {
        match self.action_space(role).index(action) {
            Ok(i) => self.legal_mask_for(nodes, link_up, role)[i],
            Err(_) => false,
        }
    }

    /// Reward for `role` on the transition `state --action--> next_state`.
    ///
    /// Only the two observations and the action are consulted, so the same
    /// function scores tampered transitions.
    pub fn transition_reward(
        &self,
        role: Role,
        state: &Observation,
        action: usize,
        next_state: &Observation,
    ) -> f64 {
        let cfg = &self.rewards;
        let t = &self.topology;
        let (nodes, links) = decode_state(state);
        let (next_nodes, next_links) = decode_state(next_state);
        let critical = t.critical_server();
        let captured = next_nodes[critical] && !nodes[critical];
        let eliminated = !next_nodes[critical] && attacker_eliminated(&next_nodes, &next_links, t);

        let legal = self.legal_mask_for(&nodes, &links, role);
        let mut r = -cfg.per_step_cost;
        if !legal.get(action).copied().unwrap_or(false) {
            r -= cfg.invalid_action_penalty;
        }
        match role {
            Role::Attacker => {
                if captured {
                    r += cfg.flag_capture_reward;
                } else if eliminated {
                    r -= cfg.attacker_eliminated_reward;
                }
            }
            Role::Defender => {
                if let Ok(Action::Isolate(h)) = self.action_space(role).action(action) {
                    if h != critical && !next_nodes[h] {
                        r -= cfg.collateral_isolation_penalty;
                    }
                }
                if captured {
                    r -= cfg.flag_capture_reward;
                } else if eliminated {
                    r += cfg.attacker_eliminated_reward;
                }
            }
        }
        r
    }

    /// Plays one turn. Illegal actions are treated as no-ops (and penalised
    /// through [`CtfEnv::transition_reward`]). A flag capture ends the game
    /// before the defender's move is applied.
    pub fn step(
        &self,
        g: &GameState,
        attacker_action: Action,
        defender_action: Action,
    ) -> Result<StepOutcome> {
        if g.is_terminal() {
            return Err(Error::Contract("step called on a finished game".into()));
        }
        let t = &self.topology;
        let attacker_space = self.action_space(Role::Attacker);
        let defender_space = self.action_space(Role::Defender);
        // Out-of-space actions are scored as invalid via an out-of-range index.
        let attacker_index = attacker_space
            .index(attacker_action)
            .unwrap_or(attacker_space.size());
        let defender_index = defender_space
            .index(defender_action)
            .unwrap_or(defender_space.size());

        let mut next = g.clone();
        if let Action::Compromise(h) = attacker_action {
            if self.is_legal(&g.node_compromised, &g.link_up, Role::Attacker, attacker_action) {
                next.node_compromised[h] = true;
            }
        }

        let captured = next.node_compromised[t.critical_server()];
        if !captured
            && self.is_legal(&next.node_compromised, &next.link_up, Role::Defender, defender_action)
        {
            match defender_action {
                Action::Isolate(h) => {
                    for &id in t.incident_links(h)? {
                        next.link_up[id] = false;
                    }
                }
                Action::Restore(h) => {
                    for &id in t.incident_links(h)? {
                        next.link_up[id] = true;
                    }
                }
                Action::Patch(h) => next.node_compromised[h] = false,
                _ => {}
            }
        }

        next.turn += 1;
        next.winner = self.check_winner(&next);

        let s = encode_state(g);
        let s_next = encode_state(&next);
        let terminal = next.winner.is_some();
        let experience = |role: Role, action: usize| Experience {
            reward: self.transition_reward(role, &s, action, &s_next),
            state: s.clone(),
            action,
            next_state: s_next.clone(),
            terminal,
            next_mask: self.legal_mask_for(&next.node_compromised, &next.link_up, role),
        };
        let attacker = experience(Role::Attacker, attacker_index);
        let defender = experience(Role::Defender, defender_index);
        Ok(StepOutcome {
            state: next,
            attacker,
            defender,
        })
    }
}
