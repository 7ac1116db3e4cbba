//! Learning agents: replay buffer, action selection, DDQN and the
//! NEC-to-DQN hybrid.

mod ddqn;
mod n2d;

pub use ddqn::{ddqn_target, DdqnAgent};
pub use n2d::{blend_target, change_step, n_step_return, N2dAgent};

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Experience, Observation};
use crate::error::{Error, Result};
use crate::neural::{DndConfig, Mlp};

/// RNG used for every stochastic choice inside a run.
pub type ArenaRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "DDQN")]
    Ddqn,
    #[serde(rename = "N2D")]
    N2d,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ddqn => "DDQN",
            Algorithm::N2d => "N2D",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DDQN" => Ok(Algorithm::Ddqn),
            "N2D" => Ok(Algorithm::N2d),
            other => Err(Error::Domain(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Hyperparameters shared by both learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the game's turn budget over which epsilon decays.
    pub epsilon_decay_fraction: f64,
    pub n_step: usize,
    pub dnd: DndConfig,
    /// Change step as a fraction of the game's turn budget.
    pub change_step_fraction: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: vec![128, 128],
            gamma: 0.99,
            learning_rate: 1e-3,
            batch_size: 32,
            replay_capacity: 100_000,
            target_sync: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.1,
            n_step: 5,
            dnd: DndConfig::default(),
            change_step_fraction: 0.2,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("replay capacity must hold at least one batch");
        }
        if self.target_sync == 0 {
            return bad("target sync period must be positive");
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon values must lie in [0, 1]");
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return bad("epsilon decay fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.change_step_fraction) {
            return bad("change step fraction must lie in [0, 1]");
        }
        if self.n_step == 0 {
            return bad("n-step horizon must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }

    pub fn layer_dims(&self, input: usize, outputs: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(&self.hidden);
        dims.push(outputs);
        dims
    }
}

/// Linear decay from `start` to `end` over `horizon` turns, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u32,
}

impl EpsilonSchedule {
    pub fn new(cfg: &AgentConfig, total_turns: u32) -> Self {
        EpsilonSchedule {
            start: cfg.epsilon_start,
            end: cfg.epsilon_end,
            horizon: (cfg.epsilon_decay_fraction * f64::from(total_turns)).floor() as u32,
        }
    }

    pub fn value(&self, turn: u32) -> f64 {
        if turn >= self.horizon {
            return self.end;
        }
        let frac = f64::from(turn) / f64::from(self.horizon);
        self.start + (self.end - self.start) * frac
    }
}

/// Which value source drove a greedy choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionSource {
    #[serde(rename = "dqn")]
    Dqn,
    #[serde(rename = "nec")]
    Nec,
}

impl ActionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionSource::Dqn => "dqn",
            ActionSource::Nec => "nec",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: usize,
    pub source: ActionSource,
    pub explored: bool,
}

/// Highest value among legal actions; ties go to the lowest index.
pub fn greedy(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn legal_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &ok)| ok)
        .map(|(i, _)| i)
        .collect()
}

/// Epsilon-greedy choice where the value vector is only computed when the
/// greedy branch is taken. Returns the action and whether it was random.
pub fn epsilon_greedy<R, F>(mask: &[bool], epsilon: f64, rng: &mut R, values: F) -> Result<(usize, bool)>
where
    R: Rng + ?Sized,
    F: FnOnce() -> Result<Vec<f64>>,
{
    let legal = legal_indices(mask);
    if legal.is_empty() {
        return Err(Error::Contract("no legal action to select".into()));
    }
    if rng.gen::<f64>() < epsilon {
        return Ok((legal[rng.gen_range(0..legal.len())], true));
    }
    let values = values()?;
    if values.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: mask.len(),
            actual: values.len(),
        });
    }
    Ok((greedy(&values, mask).expect("legal set is non-empty"), false))
}

pub fn select_action<R: Rng + ?Sized>(
    values: &[f64],
    mask: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    epsilon_greedy(mask, epsilon, rng, || Ok(values.to_vec())).map(|(a, _)| a)
}

/// Bounded FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    /// `batch` draws with replacement, each uniform over the stored items.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        if self.items.len() < batch || batch == 0 {
            return Err(Error::Contract(format!(
                "cannot sample {batch} from a buffer of {}",
                self.items.len()
            )));
        }
        Ok((0..batch)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect())
    }
}

/// A learner in one of the two supported flavours.
#[derive(Debug, Clone)]
pub enum Learner {
    Ddqn(DdqnAgent),
    N2d(N2dAgent),
}

impl Learner {
    pub fn new(
        algorithm: Algorithm,
        input_dim: usize,
        num_actions: usize,
        cfg: &AgentConfig,
        total_turns: u32,
        rng: &mut ArenaRng,
    ) -> Result<Self> {
        Ok(match algorithm {
            Algorithm::Ddqn => {
                Learner::Ddqn(DdqnAgent::new(input_dim, num_actions, cfg, total_turns, rng)?)
            }
            Algorithm::N2d => {
                Learner::N2d(N2dAgent::new(input_dim, num_actions, cfg, total_turns, rng)?)
            }
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Learner::Ddqn(_) => Algorithm::Ddqn,
            Learner::N2d(_) => Algorithm::N2d,
        }
    }

    pub fn act(&mut self, obs: &Observation, mask: &[bool], turn: u32, rng: &mut ArenaRng) -> Result<Decision> {
        match self {
            Learner::Ddqn(a) => a.act(obs, mask, turn, rng),
            Learner::N2d(a) => a.act(obs, mask, turn, rng),
        }
    }

    /// Stores the transition and performs at most one gradient update.
    pub fn observe(&mut self, e: Experience, turn: u32, rng: &mut ArenaRng) -> Result<Option<f64>> {
        match self {
            Learner::Ddqn(a) => a.observe(e, rng),
            Learner::N2d(a) => a.observe(e, turn, rng),
        }
    }

    pub fn epsilon(&self, turn: u32) -> f64 {
        match self {
            Learner::Ddqn(a) => a.epsilon(turn),
            Learner::N2d(a) => a.dqn().epsilon(turn),
        }
    }

    /// The online Q-network (the DQN side for the hybrid).
    pub fn q_network(&self) -> &Mlp {
        match self {
            Learner::Ddqn(a) => a.online(),
            Learner::N2d(a) => a.dqn().online(),
        }
    }

    pub fn replay_buffer(&self) -> &ReplayBuffer {
        match self {
            Learner::Ddqn(a) => a.buffer(),
            Learner::N2d(a) => a.dqn().buffer(),
        }
    }

    /// Replaces both online and target networks, e.g. to carry weights
    /// between runs.
    pub fn load_q_network(&mut self, net: Mlp) -> Result<()> {
        match self {
            Learner::Ddqn(a) => a.load_network(net),
            Learner::N2d(a) => a.dqn_mut().load_network(net),
        }
    }
}
