use crate::agents::{epsilon_greedy, greedy, AgentConfig, ArenaRng, Decision, ActionSource, EpsilonSchedule, ReplayBuffer};
use crate::env::{Experience, Observation};
use crate::error::{Error, Result};
use crate::neural::Mlp;

/// Double-DQN bootstrap target: the online network picks the next action,
/// the target network scores it. Terminal transitions return `reward`.
pub fn ddqn_target(
    reward: f64,
    next_state: &[f64],
    terminal: bool,
    gamma: f64,
    online: &Mlp,
    target: &Mlp,
    mask: &[bool],
) -> Result<f64> {
    if terminal || gamma == 0.0 {
        return Ok(reward);
    }
    let q_online = online.forward(next_state)?;
    let Some(best) = greedy(&q_online, mask) else {
        return Ok(reward);
    };
    let q_target = target.forward(next_state)?;
    Ok(reward + gamma * q_target[best])
}

/// Online/target double DQN with uniform experience replay.
#[derive(Debug, Clone)]
pub struct DdqnAgent {
    online: Mlp,
    target: Mlp,
    buffer: ReplayBuffer,
    gamma: f64,
    learning_rate: f64,
    batch_size: usize,
    target_sync: u64,
    updates: u64,
    epsilon: EpsilonSchedule,
}

impl DdqnAgent {
    pub fn new(
        input_dim: usize,
        num_actions: usize,
        cfg: &AgentConfig,
        total_turns: u32,
        rng: &mut ArenaRng,
    ) -> Result<Self> {
        cfg.validate()?;
        let online = Mlp::new(&cfg.layer_dims(input_dim, num_actions), rng)?;
        Ok(DdqnAgent {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            gamma: cfg.gamma,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            target_sync: cfg.target_sync,
            updates: 0,
            epsilon: EpsilonSchedule::new(cfg, total_turns),
        })
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn online_mut(&mut self) -> &mut Mlp {
        &mut self.online
    }

    pub fn target_mut(&mut self) -> &mut Mlp {
        &mut self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn epsilon(&self, turn: u32) -> f64 {
        self.epsilon.value(turn)
    }

    pub fn load_network(&mut self, net: Mlp) -> Result<()> {
        if net.dims() != self.online.dims() {
            return Err(Error::Config(format!(
                "network widths {:?} do not match {:?}",
                net.dims(),
                self.online.dims()
            )));
        }
        self.target = net.clone();
        self.online = net;
        Ok(())
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.online.forward(&obs.to_input())
    }

    pub fn act(&mut self, obs: &Observation, mask: &[bool], turn: u32, rng: &mut ArenaRng) -> Result<Decision> {
        let eps = self.epsilon(turn);
        let (action, explored) = epsilon_greedy(mask, eps, rng, || self.q_values(obs))?;
        Ok(Decision {
            action,
            source: ActionSource::Dqn,
            explored,
        })
    }

    pub(crate) fn push(&mut self, e: Experience) {
        self.buffer.push(e);
    }

    pub fn observe(&mut self, e: Experience, rng: &mut ArenaRng) -> Result<Option<f64>> {
        self.push(e);
        if self.buffer.len() < self.batch_size {
            return Ok(None);
        }
        let batch: Vec<Experience> = self
            .buffer
            .sample(self.batch_size, rng)?
            .into_iter()
            .cloned()
            .collect();
        self.update(&batch).map(Some)
    }

    pub fn ddqn_target_for(&self, e: &Experience) -> Result<f64> {
        ddqn_target(
            e.reward,
            &e.next_state.to_input(),
            e.terminal,
            self.gamma,
            &self.online,
            &self.target,
            &e.next_mask,
        )
    }

    /// One gradient step toward double-DQN targets.
    pub fn update(&mut self, batch: &[Experience]) -> Result<f64> {
        let targets = batch
            .iter()
            .map(|e| self.ddqn_target_for(e))
            .collect::<Result<Vec<_>>>()?;
        self.train_toward(batch, &targets)
    }

    /// One gradient step toward caller-supplied targets, with the usual
    /// target-network synchronisation.
    pub fn train_toward(&mut self, batch: &[Experience], targets: &[f64]) -> Result<f64> {
        let inputs: Vec<Vec<f64>> = batch.iter().map(|e| e.state.to_input()).collect();
        let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
        let loss = self
            .online
            .train_batch(&inputs, &actions, targets, self.learning_rate)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.target_sync) {
            self.target = self.online.clone();
        }
        Ok(loss)
    }
}
