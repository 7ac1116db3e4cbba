use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agents::Algorithm;
use crate::env::Role;
use crate::error::{Error, Result};
use crate::harness::Game;

/// Outcome of one game run. `set` and `run` are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub set: u32,
    pub run: u32,
    pub winner: Algorithm,
    pub turn: u32,
    pub seed: u64,
}

/// Per-set aggregate in the shape of the results tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub set: u32,
    pub attacker: Algorithm,
    pub defender: Algorithm,
    pub attacker_wins: usize,
    pub defender_wins: usize,
    /// Floor of the mean winning turn; absent when the role never won.
    pub attacker_avg_turn: Option<u64>,
    pub defender_avg_turn: Option<u64>,
    pub attacker_turns: Vec<u32>,
    pub defender_turns: Vec<u32>,
}

impl SetSummary {
    pub fn wins(&self, algorithm: Algorithm) -> usize {
        let mut n = 0;
        if self.attacker == algorithm {
            n += self.attacker_wins;
        }
        if self.defender == algorithm {
            n += self.defender_wins;
        }
        n
    }

    pub fn avg_turn(&self, role: Role) -> Option<u64> {
        match role {
            Role::Attacker => self.attacker_avg_turn,
            Role::Defender => self.defender_avg_turn,
        }
    }

    pub fn turns(&self, role: Role) -> &[u32] {
        match role {
            Role::Attacker => &self.attacker_turns,
            Role::Defender => &self.defender_turns,
        }
    }
}

/// Integer floor of the arithmetic mean.
pub fn floor_mean(turns: &[u32]) -> Option<u64> {
    if turns.is_empty() {
        return None;
    }
    let total: u64 = turns.iter().map(|&t| u64::from(t)).sum();
    Some(total / turns.len() as u64)
}

/// Win counts and floored average winning turns of one set.
pub fn aggregate(records: &[RunRecord], game: Game) -> Result<SetSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Domain("cannot aggregate an empty record list".into()))?;
    if let Some(r) = records.iter().find(|r| r.set != first.set) {
        return Err(Error::Domain(format!(
            "records mix sets {} and {}",
            first.set, r.set
        )));
    }
    let attacker = game.algorithm(Role::Attacker);
    let defender = game.algorithm(Role::Defender);
    let pick = |alg: Algorithm| -> Vec<u32> {
        records
            .iter()
            .filter(|r| r.winner == alg)
            .map(|r| r.turn)
            .collect()
    };
    let attacker_turns = pick(attacker);
    let defender_turns = pick(defender);
    Ok(SetSummary {
        set: first.set,
        attacker,
        defender,
        attacker_wins: attacker_turns.len(),
        defender_wins: defender_turns.len(),
        attacker_avg_turn: floor_mean(&attacker_turns),
        defender_avg_turn: floor_mean(&defender_turns),
        attacker_turns,
        defender_turns,
    })
}

/// Groups records by set (ascending) and aggregates each group.
pub fn aggregate_sets(records: &[RunRecord], game: Game) -> Result<Vec<SetSummary>> {
    let mut sets: Vec<u32> = records.iter().map(|r| r.set).collect();
    sets.sort_unstable();
    sets.dedup();
    sets.into_iter()
        .map(|s| {
            let group: Vec<RunRecord> = records.iter().filter(|r| r.set == s).copied().collect();
            aggregate(&group, game)
        })
        .collect()
}

/// Signed percent change `100 * (after - before) / before`.
pub fn percent_change(before: f64, after: f64) -> Result<f64> {
    if before == 0.0 || !before.is_finite() || !after.is_finite() {
        return Err(Error::Domain(format!(
            "percent change undefined from {before} to {after}"
        )));
    }
    Ok(100.0 * (after - before) / before)
}

/// Rounds to two decimals, as percentages are reported.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_tailed: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test, two-tailed.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain(format!(
            "t-test needs at least 2 observations per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Domain("t-test samples must be finite".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Err(Error::Domain("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Domain(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult {
        t,
        df,
        p_two_tailed: p,
    })
}

/// Grouped-bar data for one role: `set,control_avg,attack_avg`. Absent
/// averages are left empty.
pub fn emit_plot_data<W: Write>(
    control: &[SetSummary],
    attack: &[SetSummary],
    role: Role,
    mut w: W,
) -> Result<()> {
    if control.len() != attack.len() {
        return Err(Error::Domain(format!(
            "control has {} sets but attack has {}",
            control.len(),
            attack.len()
        )));
    }
    let cell = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(w, "set,control_avg,attack_avg")?;
    for (c, a) in control.iter().zip(attack) {
        if c.set != a.set {
            return Err(Error::Domain(format!("set {} paired with set {}", c.set, a.set)));
        }
        writeln!(w, "set{},{},{}", c.set, cell(c.avg_turn(role)), cell(a.avg_turn(role)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(set: u32, run: u32, winner: Algorithm, turn: u32) -> RunRecord {
        RunRecord {
            set,
            run,
            winner,
            turn,
            seed: 0,
        }
    }

    #[test]
    fn floored_averages() {
        assert_eq!(floor_mean(&[4914, 2670, 4836]), Some(4140));
        assert_eq!(floor_mean(&[7785, 9174, 2907, 2997, 20575, 969]), Some(7401));
        assert_eq!(floor_mean(&[1138, 4281, 5000, 5000, 5000, 5000, 5000]), Some(4345));
        assert_eq!(floor_mean(&[]), None);
    }

    #[test]
    fn aggregate_splits_by_role() {
        use Algorithm::*;
        let recs = vec![
            rec(1, 1, Ddqn, 4914),
            rec(1, 2, N2d, 5000),
            rec(1, 3, Ddqn, 2670),
        ];
        let s = aggregate(&recs, Game::One).unwrap();
        assert_eq!(s.attacker_wins, 2);
        assert_eq!(s.defender_wins, 1);
        assert_eq!(s.attacker_avg_turn, Some(3792));
        assert_eq!(s.defender_avg_turn, Some(5000));
        assert_eq!(s.wins(Ddqn), 2);
        let s2 = aggregate(&recs, Game::Two).unwrap();
        assert_eq!(s2.defender_wins, 2);
        let none = aggregate(&recs[..1], Game::One).unwrap();
        assert_eq!(none.defender_avg_turn, None);
        assert!(aggregate(&[], Game::One).is_err());
        assert!(aggregate(&[rec(1, 1, Ddqn, 1), rec(2, 1, Ddqn, 1)], Game::One).is_err());
    }

    #[test]
    fn percent_examples() {
        assert_eq!(round2(percent_change(7401.0, 9800.0).unwrap()), 32.41);
        assert_eq!(round2(percent_change(5698.0, 3827.0).unwrap()), -32.84);
        assert_eq!(round2(percent_change(2406.0, 3428.0).unwrap()), 42.48);
        assert!(percent_change(0.0, 1.0).is_err());
    }

    #[test]
    fn welch_identical_samples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p_two_tailed - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_separated_samples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1001.0, 1002.0, 1003.001]).unwrap();
        assert!(r.p_two_tailed < 0.01);
        assert!(r.t < 0.0);
    }

    #[test]
    fn welch_reference_values() {
        // Reference values from an independent high-precision computation.
        let a = [7785.0, 9174.0, 2907.0, 2997.0, 20575.0, 969.0];
        let b = [7733.0, 8701.0, 3609.0, 16511.0, 3057.0, 19193.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.t - -0.599_656_462_438_453_9).abs() < 1e-4);
        assert!((r.df - 9.946_392_949_335_156).abs() < 1e-4);
        assert!((r.p_two_tailed - 0.562_145_781_396_315_5).abs() < 1e-4);

        let r = welch_t_test(&[4914.0, 2670.0, 4836.0], &[40.0, 1138.0]).unwrap();
        assert!((r.t - 3.869_548_811_020_991_7).abs() < 1e-4);
        assert!((r.df - 2.991_873_279_599_615).abs() < 1e-4);
        assert!((r.p_two_tailed - 0.030_684_832_450_950_25).abs() < 1e-4);
    }

    #[test]
    fn welch_rejects_degenerate_input() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t_test(&[3.0, 3.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn plot_data_rows() {
        use Algorithm::*;
        let c = aggregate(&[rec(1, 1, Ddqn, 10), rec(1, 2, N2d, 20)], Game::One).unwrap();
        let a = aggregate(&[rec(1, 1, N2d, 30)], Game::One).unwrap();
        let mut out = Vec::new();
        emit_plot_data(&[c.clone()], &[a.clone()], Role::Attacker, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "set,control_avg,attack_avg\nset1,10,\n");
        let mut out = Vec::new();
        emit_plot_data(&[], &[], Role::Defender, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "set,control_avg,attack_avg\n");
        assert!(emit_plot_data(&[c], &[], Role::Defender, Vec::new()).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_invariants(runs in proptest::collection::vec((any::<bool>(), 1u32..5000), 1..30)) {
            let recs: Vec<RunRecord> = runs
                .iter()
                .enumerate()
                .map(|(i, &(ddqn, t))| rec(1, i as u32 + 1, if ddqn { Algorithm::Ddqn } else { Algorithm::N2d }, t))
                .collect();
            let s = aggregate(&recs, Game::One).unwrap();
            prop_assert_eq!(s.attacker_wins + s.defender_wins, recs.len());
            for role in [Role::Attacker, Role::Defender] {
                let turns = s.turns(role);
                match s.avg_turn(role) {
                    None => prop_assert!(turns.is_empty()),
                    Some(avg) => {
                        let lo = u64::from(*turns.iter().min().unwrap());
                        let hi = u64::from(*turns.iter().max().unwrap());
                        prop_assert!(lo <= avg && avg <= hi);
                        let exact = turns.iter().map(|&t| f64::from(t)).sum::<f64>() / turns.len() as f64;
                        prop_assert_eq!(avg, exact.floor() as u64);
                    }
                }
            }
        }
    }
}
