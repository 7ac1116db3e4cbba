use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, Algorithm};
use crate::env::{RewardConfig, Role};
use crate::error::{Error, Result};
use crate::poison::PoisonConfig;

/// Game 1: DDQN attacks, N2D defends. Game 2: roles reversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Game {
    One,
    Two,
}

impl Game {
    pub fn number(self) -> u8 {
        match self {
            Game::One => 1,
            Game::Two => 2,
        }
    }

    pub fn algorithm(self, role: Role) -> Algorithm {
        match (self, role) {
            (Game::One, Role::Attacker) | (Game::Two, Role::Defender) => Algorithm::Ddqn,
            (Game::One, Role::Defender) | (Game::Two, Role::Attacker) => Algorithm::N2d,
        }
    }

    pub fn role_of(self, algorithm: Algorithm) -> Role {
        if self.algorithm(Role::Attacker) == algorithm {
            Role::Attacker
        } else {
            Role::Defender
        }
    }
}

impl TryFrom<u8> for Game {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Game::One),
            2 => Ok(Game::Two),
            other => Err(Error::Config(format!("game must be 1 or 2, got {other}"))),
        }
    }
}

impl From<Game> for u8 {
    fn from(g: Game) -> u8 {
        g.number()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: Game,
    pub attack_enabled: bool,
    pub turn_limits: Vec<u32>,
    pub runs_per_set: usize,
    pub base_seed: u64,
    pub poison: PoisonConfig,
    pub rewards: RewardConfig,
    pub agent: AgentConfig,
    /// Carry each run's learned Q-networks into the next run of the set.
    pub carry_weights: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            game: Game::One,
            attack_enabled: false,
            turn_limits: vec![5_000, 50_000, 500_000],
            runs_per_set: 10,
            base_seed: 0,
            poison: PoisonConfig::default(),
            rewards: RewardConfig::default(),
            agent: AgentConfig::default(),
            carry_weights: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs_per_set == 0 {
            return Err(Error::Config("runs_per_set must be at least 1".into()));
        }
        if self.turn_limits.is_empty() || self.turn_limits.contains(&0) {
            return Err(Error::Config("turn limits must be non-empty and positive".into()));
        }
        if !self.poison.threshold.is_finite() {
            return Err(Error::Config("poison threshold must be finite".into()));
        }
        self.rewards.validate()?;
        self.agent.validate()
    }

    /// Turn limit of 1-based set `set`.
    pub fn turn_limit(&self, set: u32) -> Result<u32> {
        set.checked_sub(1)
            .and_then(|i| self.turn_limits.get(i as usize))
            .copied()
            .ok_or_else(|| Error::Config(format!("no set {set} (have {})", self.turn_limits.len())))
    }

    /// Applies one `key=value` setting.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "game" => self.game = Game::try_from(parse::<u8>(key, value)?)?,
            "attack" | "attack_enabled" => self.attack_enabled = parse_bool(key, value)?,
            "turn_limits" => self.turn_limits = parse_list(key, value)?,
            "runs_per_set" => self.runs_per_set = parse(key, value)?,
            "seed" | "base_seed" => self.base_seed = parse(key, value)?,
            "carry_weights" => self.carry_weights = parse_bool(key, value)?,
            "poison.limit" => self.poison.limit = parse(key, value)?,
            "poison.threshold" => self.poison.threshold = parse(key, value)?,
            "poison.enabled" => self.poison.enabled = parse_bool(key, value)?,
            "reward.flag_capture" => self.rewards.flag_capture_reward = parse(key, value)?,
            "reward.attacker_eliminated" => {
                self.rewards.attacker_eliminated_reward = parse(key, value)?
            }
            "reward.per_step_cost" => self.rewards.per_step_cost = parse(key, value)?,
            "reward.invalid_action" => self.rewards.invalid_action_penalty = parse(key, value)?,
            "reward.collateral_isolation" => {
                self.rewards.collateral_isolation_penalty = parse(key, value)?
            }
            "agent.hidden" => self.agent.hidden = parse_list(key, value)?,
            "agent.gamma" => self.agent.gamma = parse(key, value)?,
            "agent.learning_rate" => self.agent.learning_rate = parse(key, value)?,
            "agent.batch_size" => self.agent.batch_size = parse(key, value)?,
            "agent.replay_capacity" => self.agent.replay_capacity = parse(key, value)?,
            "agent.target_sync" => self.agent.target_sync = parse(key, value)?,
            "agent.epsilon_start" => self.agent.epsilon_start = parse(key, value)?,
            "agent.epsilon_end" => self.agent.epsilon_end = parse(key, value)?,
            "agent.epsilon_decay_fraction" => {
                self.agent.epsilon_decay_fraction = parse(key, value)?
            }
            "agent.n_step" => self.agent.n_step = parse(key, value)?,
            "agent.change_step_fraction" => self.agent.change_step_fraction = parse(key, value)?,
            "dnd.capacity" => self.agent.dnd.capacity = parse(key, value)?,
            "dnd.neighbors" => self.agent.dnd.neighbors = parse(key, value)?,
            "dnd.smoothing" => self.agent.dnd.smoothing = parse(key, value)?,
            "dnd.write_rate" => self.agent.dnd.write_rate = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: no as u64 + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.apply(k, v).map_err(|e| Error::Parse {
                line: no as u64 + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_per_game() {
        assert_eq!(Game::One.algorithm(Role::Attacker), Algorithm::Ddqn);
        assert_eq!(Game::One.algorithm(Role::Defender), Algorithm::N2d);
        assert_eq!(Game::Two.algorithm(Role::Attacker), Algorithm::N2d);
        assert_eq!(Game::Two.role_of(Algorithm::Ddqn), Role::Defender);
    }

    #[test]
    fn defaults_match_experiment_design() {
        let c = ExperimentConfig::default();
        assert_eq!(c.turn_limits, vec![5000, 50_000, 500_000]);
        assert_eq!(c.runs_per_set, 10);
        assert_eq!(c.turn_limit(1).unwrap(), 5000);
        assert!(c.turn_limit(4).is_err());
        assert!(c.turn_limit(0).is_err());
        c.validate().unwrap();
    }

    #[test]
    fn key_value_file() {
        let mut c = ExperimentConfig::default();
        c.apply_text(
            "# comment\ngame = 2\nattack=on\nturn_limits=100,200\nagent.hidden=16, 8\npoison.limit=3 # trailing\n",
        )
        .unwrap();
        assert_eq!(c.game, Game::Two);
        assert!(c.attack_enabled);
        assert_eq!(c.turn_limits, vec![100, 200]);
        assert_eq!(c.agent.hidden, vec![16, 8]);
        assert_eq!(c.poison.limit, 3);
        assert!(matches!(c.apply_text("game=3"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(c.apply_text("\nbogus=1"), Err(Error::Parse { line: 2, .. })));
        assert!(c.apply_text("noequals").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = ExperimentConfig::default();
        c.runs_per_set = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.turn_limits = vec![5000, 0];
        assert!(c.validate().is_err());
    }
}
