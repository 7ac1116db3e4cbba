use std::io::{BufRead, Write};

use crate::env::{Action, CtfEnv, GameState, Role};
use crate::error::{Error, Result};

const LOG_MAGIC: &str = "# ctf-arena action-log v1";
const LOG_HEADER: &str = "turn,role,action-kind,host";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoggedAction {
    /// Turn counter of the state the action was chosen in (0-based).
    pub turn: u32,
    pub role: Role,
    pub action: Action,
}

/// Per-game record of every move, sufficient to replay the game exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionLog {
    pub run_index: usize,
    pub entries: Vec<LoggedAction>,
}

impl ActionLog {
    pub fn new(run_index: usize) -> Self {
        ActionLog {
            run_index,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, turn: u32, attacker: Action, defender: Action) {
        self.entries.push(LoggedAction {
            turn,
            role: Role::Attacker,
            action: attacker,
        });
        self.entries.push(LoggedAction {
            turn,
            role: Role::Defender,
            action: defender,
        });
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{LOG_MAGIC} run={}", self.run_index)?;
        writeln!(w, "{LOG_HEADER}")?;
        for e in &self.entries {
            let host = e.action.host().map(|h| h.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", e.turn, e.role, e.action.kind(), host)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<ActionLog> {
        let mut lines = r.lines();
        let parse_err = |line: usize, message: String| Error::Parse {
            line: line as u64,
            message,
        };
        let first = lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err(1, "empty action log".into()))?;
        let run_index = first
            .strip_prefix(LOG_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("run="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(1, "missing action-log header".into()))?;
        match lines.next().transpose()? {
            Some(h) if h.trim() == LOG_HEADER => {}
            _ => return Err(parse_err(2, format!("expected column header {LOG_HEADER:?}"))),
        }

        let mut log = ActionLog::new(run_index);
        for (i, line) in lines.enumerate() {
            let line_no = i + 3;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(parse_err(line_no, format!("expected 4 fields, got {}", fields.len())));
            }
            let turn = fields[0]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad turn {:?}", fields[0])))?;
            let role: Role = fields[1].parse().map_err(|e: Error| parse_err(line_no, e.to_string()))?;
            let host = if fields[3].is_empty() {
                None
            } else {
                Some(
                    fields[3]
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad host {:?}", fields[3])))?,
                )
            };
            let action = Action::from_parts(fields[2], host)
                .map_err(|e| parse_err(line_no, e.to_string()))?;
            log.entries.push(LoggedAction { turn, role, action });
        }
        Ok(log)
    }
}

/// Replays a logged game from its starting state.
pub fn replay(env: &CtfEnv, log: &ActionLog) -> Result<GameState> {
    let mut g = env.reset(log.run_index);
    let mut entries = log.entries.iter();
    while let Some(a) = entries.next() {
        let d = entries
            .next()
            .ok_or_else(|| Error::Domain(format!("turn {} has no defender move", a.turn)))?;
        if a.role != Role::Attacker || d.role != Role::Defender || a.turn != d.turn {
            return Err(Error::Domain(format!("malformed move pair at turn {}", a.turn)));
        }
        if a.turn != g.turn {
            return Err(Error::Domain(format!(
                "log turn {} does not follow game turn {}",
                a.turn, g.turn
            )));
        }
        g = env.step(&g, a.action, d.action)?.state;
    }
    Ok(g)
}
