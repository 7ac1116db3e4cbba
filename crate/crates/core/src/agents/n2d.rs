//! NEC-to-DQN hybrid.
//!
//! Early in a game decisions come from per-action episodic dictionaries
//! keyed by the Q-network's first hidden layer; the DQN side gradually takes
//! over and is the sole decision maker from the change step onward. The
//! dictionaries keep learning for the whole game and, until the change step,
//! also feed the DQN's regression targets.

use std::collections::VecDeque;

use crate::agents::{
    epsilon_greedy, greedy, ActionSource, AgentConfig, ArenaRng, DdqnAgent, Decision,
};
use crate::env::{Experience, Observation};
use crate::error::Result;
use crate::neural::Dnd;
use rand::Rng;

/// Fractional part of the golden ratio; drives the low-discrepancy
/// sequence used to pick the decision side.
const GOLDEN_FRACTION: f64 = 0.618_033_988_749_894_9;

/// `floor(fraction * total_turns)`.
pub fn change_step(total_turns: u32, fraction: f64) -> u32 {
    (fraction * f64::from(total_turns)).floor() as u32
}

/// Discounted sum of `rewards` plus the discounted bootstrap value after
/// the last of them.
pub fn n_step_return(rewards: &[f64], gamma: f64, bootstrap: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total + discount * bootstrap
}

/// Convex mix of the episodic estimate and the double-DQN target.
pub fn blend_target(lambda: f64, nec: f64, ddqn: f64) -> f64 {
    lambda * nec + (1.0 - lambda) * ddqn
}

#[derive(Debug, Clone)]
struct Pending {
    key: Vec<f64>,
    action: usize,
    reward: f64,
}

#[derive(Debug, Clone)]
pub struct N2dAgent {
    dqn: DdqnAgent,
    dicts: Vec<Dnd>,
    n_step: usize,
    window: VecDeque<Pending>,
    total_turns: u32,
    change_step: u32,
    phase: f64,
}

impl N2dAgent {
    pub fn new(
        input_dim: usize,
        num_actions: usize,
        cfg: &AgentConfig,
        total_turns: u32,
        rng: &mut ArenaRng,
    ) -> Result<Self> {
        let dqn = DdqnAgent::new(input_dim, num_actions, cfg, total_turns, rng)?;
        let dicts = (0..num_actions)
            .map(|_| Dnd::new(cfg.dnd))
            .collect::<Result<Vec<_>>>()?;
        Ok(N2dAgent {
            dqn,
            dicts,
            n_step: cfg.n_step,
            window: VecDeque::with_capacity(cfg.n_step + 1),
            total_turns,
            change_step: change_step(total_turns, cfg.change_step_fraction),
            phase: rng.gen::<f64>(),
        })
    }

    pub fn dqn(&self) -> &DdqnAgent {
        &self.dqn
    }

    pub fn dqn_mut(&mut self) -> &mut DdqnAgent {
        &mut self.dqn
    }

    pub fn dictionaries(&self) -> &[Dnd] {
        &self.dicts
    }

    pub fn change_step(&self) -> u32 {
        self.change_step
    }

    pub fn total_turns(&self) -> u32 {
        self.total_turns
    }

    /// Share of decisions handed to the DQN side: `min(turn / CS, 1)`.
    pub fn dqn_share(&self, turn: u32) -> f64 {
        if self.change_step == 0 {
            return 1.0;
        }
        (f64::from(turn) / f64::from(self.change_step)).min(1.0)
    }

    /// Weight of the episodic estimate in the DQN's targets.
    pub fn nec_weight(&self, turn: u32) -> f64 {
        1.0 - self.dqn_share(turn)
    }

    /// Which side makes the greedy choice at `turn`.
    ///
    /// Each turn is handed to the DQN side with probability `dqn_share`,
    /// realised with a randomly shifted golden-ratio sequence so that the
    /// share over any window of turns tracks the schedule closely.
    pub fn decision_side(&self, turn: u32) -> ActionSource {
        let share = self.dqn_share(turn);
        if share >= 1.0 {
            return ActionSource::Dqn;
        }
        if share <= 0.0 {
            return ActionSource::Nec;
        }
        let u = (self.phase + f64::from(turn) * GOLDEN_FRACTION).fract();
        if u < share {
            ActionSource::Dqn
        } else {
            ActionSource::Nec
        }
    }

    fn embed(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.dqn.online().embed(&obs.to_input())
    }

    /// Episodic value per action; empty dictionaries read as 0. Legal
    /// entries that were read are marked as used when `touch` is set.
    fn nec_values(&mut self, key: &[f64], mask: &[bool], touch: bool) -> Result<Vec<f64>> {
        let mut values = vec![0.0; self.dicts.len()];
        for (a, dict) in self.dicts.iter_mut().enumerate() {
            if !mask.get(a).copied().unwrap_or(false) || dict.is_empty() {
                continue;
            }
            let l = dict.lookup(key)?;
            values[a] = l.value;
            if touch {
                dict.touch(&l);
            }
        }
        Ok(values)
    }

    /// Best episodic value over legal actions with a non-empty dictionary.
    fn nec_best(&self, key: &[f64], mask: &[bool]) -> Result<Option<f64>> {
        let mut best: Option<f64> = None;
        for (a, dict) in self.dicts.iter().enumerate() {
            if !mask.get(a).copied().unwrap_or(false) || dict.is_empty() {
                continue;
            }
            let v = dict.lookup(key)?.value;
            if best.is_none_or(|b| v > b) {
                best = Some(v);
            }
        }
        Ok(best)
    }

    pub fn nec_q_values(&mut self, obs: &Observation, mask: &[bool]) -> Result<Vec<f64>> {
        let key = self.embed(obs)?;
        self.nec_values(&key, mask, false)
    }

    pub fn act(&mut self, obs: &Observation, mask: &[bool], turn: u32, rng: &mut ArenaRng) -> Result<Decision> {
        let source = self.decision_side(turn);
        let eps = self.dqn.epsilon(turn);
        let (action, explored) = epsilon_greedy(mask, eps, rng, || match source {
            ActionSource::Dqn => self.dqn.q_values(obs),
            ActionSource::Nec => {
                let key = self.embed(obs)?;
                self.nec_values(&key, mask, true)
            }
        })?;
        Ok(Decision {
            action,
            source,
            explored,
        })
    }

    /// Adds the transition to the n-step window and writes every return
    /// that is now complete into the taken action's dictionary.
    pub fn nec_update(&mut self, e: &Experience) -> Result<()> {
        let key = self.embed(&e.state)?;
        self.window.push_back(Pending {
            key,
            action: e.action,
            reward: e.reward,
        });
        let gamma = self.dqn.gamma();
        if e.terminal {
            while !self.window.is_empty() {
                let rewards: Vec<f64> = self.window.iter().map(|p| p.reward).collect();
                let ret = n_step_return(&rewards, gamma, 0.0);
                let p = self.window.pop_front().expect("window is non-empty");
                self.dicts[p.action].write(&p.key, ret)?;
            }
            return Ok(());
        }
        if self.window.len() >= self.n_step {
            let next_key = self.embed(&e.next_state)?;
            let bootstrap = self.nec_best(&next_key, &e.next_mask)?.unwrap_or(0.0);
            let rewards: Vec<f64> = self.window.iter().map(|p| p.reward).collect();
            let ret = n_step_return(&rewards, gamma, bootstrap);
            let p = self.window.pop_front().expect("window is non-empty");
            self.dicts[p.action].write(&p.key, ret)?;
        }
        Ok(())
    }

    /// One-step episodic target `r + gamma * max_a' Q_nec(s', a')`, or
    /// `None` when no legal action has a populated dictionary.
    pub fn nec_target(&self, e: &Experience) -> Result<Option<f64>> {
        if e.terminal {
            return Ok(Some(e.reward));
        }
        let key = self.embed(&e.next_state)?;
        Ok(self
            .nec_best(&key, &e.next_mask)?
            .map(|v| e.reward + self.dqn.gamma() * v))
    }

    /// Regression targets for the DQN side at `turn`.
    pub fn targets(&self, batch: &[Experience], turn: u32) -> Result<Vec<f64>> {
        let lambda = self.nec_weight(turn);
        batch
            .iter()
            .map(|e| {
                let ddqn = self.dqn.ddqn_target_for(e)?;
                if lambda <= 0.0 {
                    return Ok(ddqn);
                }
                Ok(match self.nec_target(e)? {
                    Some(nec) => blend_target(lambda, nec, ddqn),
                    None => ddqn,
                })
            })
            .collect()
    }

    pub fn update(&mut self, batch: &[Experience], turn: u32) -> Result<f64> {
        let targets = self.targets(batch, turn)?;
        self.dqn.train_toward(batch, &targets)
    }

    pub fn observe(&mut self, e: Experience, turn: u32, rng: &mut ArenaRng) -> Result<Option<f64>> {
        self.nec_update(&e)?;
        self.dqn.push(e);
        if self.dqn.buffer().len() < self.dqn.batch_size() {
            return Ok(None);
        }
        let batch: Vec<Experience> = self
            .dqn
            .buffer()
            .sample(self.dqn.batch_size(), rng)?
            .into_iter()
            .cloned()
            .collect();
        self.update(&batch, turn).map(Some)
    }

    /// Greedy action of the episodic side alone (no exploration).
    pub fn nec_greedy(&mut self, obs: &Observation, mask: &[bool]) -> Result<Option<usize>> {
        let values = self.nec_q_values(obs, mask)?;
        Ok(greedy(&values, mask))
    }
}
