//! White-box state-manipulation poisoning of a defender's stored
//! experiences.
//!
//! With access to the defender's Q-network, the attacker scores every
//! single-node flip of the stored next state by the defender's best value
//! in the flipped state, keeps up to `limit` of the lowest-scoring flips per
//! category, and applies them together before the transition reaches the
//! replay buffer:
//!
//! * false positives: clean hosts reported as compromised;
//! * false negatives: compromised hosts reported as clean.
//!
//! Link bits are never touched. The reward is recomputed from the tampered
//! transition; it is never flipped directly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::greedy;
use crate::env::{Experience, Observation};
use crate::error::{Error, Result};
use crate::neural::Mlp;
use crate::topology::HostId;

const AUDIT_MAGIC: &str = "# ctf-arena poison-audit v1";
const AUDIT_HEADER: &str = "turn,fp_nodes,fn_nodes,v_scores";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoisonConfig {
    /// Maximum number of flips per category.
    pub limit: usize,
    /// Flips scoring below this value qualify for injection.
    pub threshold: f64,
    pub enabled: bool,
}

impl Default for PoisonConfig {
    fn default() -> Self {
        PoisonConfig {
            limit: 2,
            threshold: 1.0,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoisonOutcome {
    pub fp_nodes: Vec<HostId>,
    pub fn_nodes: Vec<HostId>,
    /// Score of each entry in `fp_nodes`, same order.
    pub fp_scores: Vec<f64>,
    /// Score of each entry in `fn_nodes`, same order.
    pub fn_scores: Vec<f64>,
    pub perturbed_next_state: Observation,
    pub recomputed_reward: f64,
}

/// The defender's best legal value after flipping `node` in `s_prime`.
pub fn candidate_value(model: &Mlp, s_prime: &Observation, node: HostId, mask: &[bool]) -> Result<f64> {
    let mut flipped = s_prime.clone();
    flipped.flip_node(node)?;
    let q = model.forward(&flipped.to_input())?;
    let best = greedy(&q, mask)
        .ok_or_else(|| Error::Contract("candidate scoring needs a legal action".into()))?;
    Ok(q[best])
}

/// Bounded list of the lowest-scoring candidates, kept sorted by
/// (score, node id).
#[derive(Debug, Default)]
struct Retained {
    nodes: Vec<HostId>,
    scores: Vec<f64>,
}

impl Retained {
    fn offer(&mut self, node: HostId, v: f64, threshold: f64, limit: usize) {
        let beats_retained = self.scores.iter().any(|&s| v < s);
        if !(v < threshold || beats_retained) {
            return;
        }
        let pos = self.scores.iter().position(|&s| v < s).unwrap_or(self.scores.len());
        self.nodes.insert(pos, node);
        self.scores.insert(pos, v);
        self.nodes.truncate(limit);
        self.scores.truncate(limit);
    }
}

/// Tampers one experience. Returns the experience to store and an audit
/// record of what changed.
pub fn poison_experience<F>(
    model: &Mlp,
    e: &Experience,
    cfg: &PoisonConfig,
    reward_fn: F,
) -> Result<(Experience, PoisonOutcome)>
where
    F: Fn(&Observation, usize, &Observation) -> f64,
{
    if !cfg.enabled {
        return Err(Error::Contract("poisoning called with a disabled configuration".into()));
    }
    if cfg.limit == 0 {
        let outcome = PoisonOutcome {
            fp_nodes: Vec::new(),
            fn_nodes: Vec::new(),
            fp_scores: Vec::new(),
            fn_scores: Vec::new(),
            perturbed_next_state: e.next_state.clone(),
            recomputed_reward: e.reward,
        };
        return Ok((e.clone(), outcome));
    }

    let s_prime = &e.next_state;
    let mut fp = Retained::default();
    let mut fneg = Retained::default();
    for node in 0..s_prime.num_hosts() {
        let v = candidate_value(model, s_prime, node, &e.next_mask)?;
        let list = if s_prime.is_compromised(node) {
            &mut fneg
        } else {
            &mut fp
        };
        list.offer(node, v, cfg.threshold, cfg.limit);
    }

    let mut perturbed = s_prime.clone();
    for &h in fp.nodes.iter().chain(&fneg.nodes) {
        perturbed.flip_node(h)?;
    }
    let reward = reward_fn(&e.state, e.action, &perturbed);

    let tampered = Experience {
        state: e.state.clone(),
        action: e.action,
        reward,
        next_state: perturbed.clone(),
        terminal: e.terminal,
        next_mask: e.next_mask.clone(),
    };
    let outcome = PoisonOutcome {
        fp_nodes: fp.nodes,
        fn_nodes: fneg.nodes,
        fp_scores: fp.scores,
        fn_scores: fneg.scores,
        perturbed_next_state: perturbed,
        recomputed_reward: reward,
    };
    Ok((tampered, outcome))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub turn: u32,
    pub fp_nodes: Vec<HostId>,
    pub fn_nodes: Vec<HostId>,
    pub fp_scores: Vec<f64>,
    pub fn_scores: Vec<f64>,
    /// (node bits, link bits) differing between the true and stored next state.
    pub hamming: (usize, usize),
}

/// Interposer between a defender's observations and its replay buffer.
#[derive(Debug, Clone)]
pub struct WhiteboxTap {
    cfg: PoisonConfig,
    audit: Vec<AuditEntry>,
}

/// Installs a tap into `slot`. A slot can hold one tap only.
pub fn attach_whitebox_tap(slot: &mut Option<WhiteboxTap>, cfg: PoisonConfig) -> Result<&mut WhiteboxTap> {
    if slot.is_some() {
        return Err(Error::Config("a white-box tap is already attached".into()));
    }
    Ok(slot.insert(WhiteboxTap {
        cfg,
        audit: Vec::new(),
    }))
}

impl WhiteboxTap {
    pub fn config(&self) -> &PoisonConfig {
        &self.cfg
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    /// Passes `e` through unchanged while disabled; otherwise returns the
    /// tampered experience and records the flips.
    pub fn intercept<F>(&mut self, model: &Mlp, e: Experience, turn: u32, reward_fn: F) -> Result<Experience>
    where
        F: Fn(&Observation, usize, &Observation) -> f64,
    {
        if !self.cfg.enabled {
            return Ok(e);
        }
        let (tampered, outcome) = poison_experience(model, &e, &self.cfg, reward_fn)?;
        self.audit.push(AuditEntry {
            turn,
            hamming: e.next_state.hamming(&tampered.next_state),
            fp_nodes: outcome.fp_nodes,
            fn_nodes: outcome.fn_nodes,
            fp_scores: outcome.fp_scores,
            fn_scores: outcome.fn_scores,
        });
        Ok(tampered)
    }

    /// Audit CSV: `turn,fp_nodes,fn_nodes,v_scores`.
    pub fn write_audit_csv<W: Write>(&self, w: W) -> Result<()> {
        write_audit_rows(&self.audit, w)
    }
}

/// Writes audit entries as CSV, lists `;`-separated, scores listed false
/// positives first.
pub fn write_audit_rows<W: Write>(audit: &[AuditEntry], mut w: W) -> Result<()> {
    let join = |v: &[HostId]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    writeln!(w, "{AUDIT_MAGIC}")?;
    writeln!(w, "{AUDIT_HEADER}")?;
    for a in audit {
        let scores = a
            .fp_scores
            .iter()
            .chain(&a.fn_scores)
            .map(|s| format!("{s:e}"))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(w, "{},{},{},{}", a.turn, join(&a.fp_nodes), join(&a.fn_nodes), scores)?;
    }
    Ok(())
}
