use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{ActionSource, ArenaRng, Decision, Learner};
use crate::env::{encode_state, ActionLog, CtfEnv, Observation, Role};
use crate::error::{Error, Result};
use crate::harness::{run_seed, ExperimentConfig, RunRecord};
use crate::neural::Mlp;
use crate::poison::{attach_whitebox_tap, AuditEntry, WhiteboxTap};
use crate::topology::build_default_topology;

const INIT_STREAM: u64 = 0;
const ATTACKER_STREAM: u64 = 1;
const DEFENDER_STREAM: u64 = 2;

/// One gradient update of one learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub turn: u32,
    pub role: Role,
    pub loss: f64,
    pub epsilon: f64,
    pub source: ActionSource,
}

/// Everything observable about one game besides its outcome.
#[derive(Debug, Clone, Default)]
pub struct GameTrace {
    pub log: ActionLog,
    /// Poison audit; present iff the tap was attached.
    pub audit: Option<Vec<AuditEntry>>,
    pub attacker_decisions: Vec<Decision>,
    pub defender_decisions: Vec<Decision>,
    pub losses: Vec<LossRow>,
    /// (true, stored) next state of every defender transition that passed
    /// through the tap.
    pub defender_next_states: Vec<(Observation, Observation)>,
    /// Learned Q-networks at the end of the game (attacker, defender).
    pub final_networks: Option<(Mlp, Mlp)>,
}

impl GameTrace {
    /// Loss CSV: `turn,role,loss,epsilon,action-source`.
    pub fn write_losses_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# ctf-arena losses v1")?;
        writeln!(w, "turn,role,loss,epsilon,action-source")?;
        for r in &self.losses {
            writeln!(w, "{},{},{:e},{},{}", r.turn, r.role, r.loss, r.epsilon, r.source.as_str())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub set: u32,
    pub run: u32,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SetOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub traces: Vec<GameTrace>,
}

fn stream(seed: u64, id: u64) -> ArenaRng {
    let mut rng = ArenaRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Plays one learning game and returns its record.
pub fn run_game(cfg: &ExperimentConfig, set: u32, run: u32) -> Result<RunRecord> {
    run_game_traced(cfg, set, run, None).map(|(r, _)| r)
}

/// Plays one learning game, optionally starting both learners from carried
/// Q-networks (attacker, defender).
pub fn run_game_traced(
    cfg: &ExperimentConfig,
    set: u32,
    run: u32,
    carried: Option<&(Mlp, Mlp)>,
) -> Result<(RunRecord, GameTrace)> {
    cfg.validate()?;
    if run == 0 {
        return Err(Error::Config("run index is 1-based".into()));
    }
    let limit = cfg.turn_limit(set)?;
    let seed = run_seed(cfg.base_seed, cfg.game, cfg.attack_enabled, set, run);
    let env = CtfEnv::new(build_default_topology(), cfg.rewards, limit)?;
    let input = env.observation_len();

    let mut init = stream(seed, INIT_STREAM);
    let mut attacker = Learner::new(
        cfg.game.algorithm(Role::Attacker),
        input,
        env.action_space(Role::Attacker).size(),
        &cfg.agent,
        limit,
        &mut init,
    )?;
    let mut defender = Learner::new(
        cfg.game.algorithm(Role::Defender),
        input,
        env.action_space(Role::Defender).size(),
        &cfg.agent,
        limit,
        &mut init,
    )?;
    if let Some((a, d)) = carried {
        attacker.load_q_network(a.clone())?;
        defender.load_q_network(d.clone())?;
    }
    let mut rng_a = stream(seed, ATTACKER_STREAM);
    let mut rng_d = stream(seed, DEFENDER_STREAM);

    let mut tap: Option<WhiteboxTap> = None;
    if cfg.attack_enabled {
        attach_whitebox_tap(&mut tap, cfg.poison)?;
    }

    let run_index = (run - 1) as usize;
    let mut trace = GameTrace {
        log: ActionLog::new(run_index),
        ..GameTrace::default()
    };
    let space_a = env.action_space(Role::Attacker);
    let space_d = env.action_space(Role::Defender);
    let mut g = env.reset(run_index);
    while !g.is_terminal() {
        let turn = g.turn;
        let obs = encode_state(&g);
        let da = attacker.act(&obs, &env.legal_mask(&obs, Role::Attacker), turn, &mut rng_a)?;
        let dd = defender.act(&obs, &env.legal_mask(&obs, Role::Defender), turn, &mut rng_d)?;
        let (a, d) = (space_a.action(da.action)?, space_d.action(dd.action)?);
        trace.log.push(turn, a, d);
        trace.attacker_decisions.push(da);
        trace.defender_decisions.push(dd);

        let out = env.step(&g, a, d)?;
        if let Some(loss) = attacker.observe(out.attacker, turn, &mut rng_a)? {
            trace.losses.push(LossRow {
                turn,
                role: Role::Attacker,
                loss,
                epsilon: attacker.epsilon(turn),
                source: da.source,
            });
        }
        let stored = match tap.as_mut() {
            Some(t) => {
                let reward = |s: &Observation, act: usize, s2: &Observation| {
                    env.transition_reward(Role::Defender, s, act, s2)
                };
                let truth = out.defender.next_state.clone();
                let e = t.intercept(defender.q_network(), out.defender, turn, reward)?;
                trace.defender_next_states.push((truth, e.next_state.clone()));
                e
            }
            None => out.defender,
        };
        if let Some(loss) = defender.observe(stored, turn, &mut rng_d)? {
            trace.losses.push(LossRow {
                turn,
                role: Role::Defender,
                loss,
                epsilon: defender.epsilon(turn),
                source: dd.source,
            });
        }
        g = out.state;
    }

    let winner_role = g.winner.expect("loop exits on a terminal state");
    trace.audit = tap.map(|t| t.audit().to_vec());
    trace.final_networks = Some((attacker.q_network().clone(), defender.q_network().clone()));
    let record = RunRecord {
        set,
        run,
        winner: cfg.game.algorithm(winner_role),
        turn: g.turn,
        seed,
    };
    Ok((record, trace))
}

fn failure(cfg: &ExperimentConfig, set: u32, run: u32, e: &Error) -> RunFailure {
    RunFailure {
        set,
        run,
        seed: run_seed(cfg.base_seed, cfg.game, cfg.attack_enabled, set, run),
        message: e.to_string(),
    }
}

/// Plays every run of one set. Runs are independent and execute in
/// parallel unless weights are carried, in which case they run in order.
/// Failed runs are recorded and the set continues.
pub fn run_set(cfg: &ExperimentConfig, set: u32, keep_traces: bool) -> Result<SetOutcome> {
    cfg.validate()?;
    cfg.turn_limit(set)?;
    let runs = 1..=cfg.runs_per_set as u32;
    let results: Vec<(u32, Result<(RunRecord, GameTrace)>)> = if cfg.carry_weights {
        let mut carried: Option<(Mlp, Mlp)> = None;
        runs.map(|run| {
            let res = run_game_traced(cfg, set, run, carried.as_ref());
            if let Ok((_, t)) = &res {
                carried = t.final_networks.clone();
            }
            (run, res)
        })
        .collect()
    } else {
        runs.collect::<Vec<_>>()
            .into_par_iter()
            .map(|run| (run, run_game_traced(cfg, set, run, None)))
            .collect()
    };

    let mut out = SetOutcome::default();
    for (run, res) in results {
        match res {
            Ok((record, mut trace)) => {
                out.records.push(record);
                if keep_traces {
                    trace.final_networks = None;
                    out.traces.push(trace);
                }
            }
            Err(e) => out.failures.push(failure(cfg, set, run, &e)),
        }
    }
    Ok(out)
}

/// Runs the requested sets for every (game, attack) combination given.
pub fn run_matrix(
    base: &ExperimentConfig,
    conditions: &[(crate::harness::Game, bool)],
    sets: &[u32],
) -> Result<Vec<(ExperimentConfig, SetOutcome)>> {
    let mut out = Vec::new();
    for &(game, attack) in conditions {
        let mut cfg = base.clone();
        cfg.game = game;
        cfg.attack_enabled = attack;
        let mut merged = SetOutcome::default();
        for &set in sets {
            let o = run_set(&cfg, set, false)?;
            merged.records.extend(o.records);
            merged.failures.extend(o.failures);
        }
        out.push((cfg, merged));
    }
    Ok(out)
}
