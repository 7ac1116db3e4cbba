use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ctf_arena::env::{replay, ActionLog, CtfEnv, Role};
use ctf_arena::harness::{
    aggregate_sets, emit_plot_data, percent_change, read_records_csv, round2, run_set, welch_t_test,
    write_results, ExperimentConfig, Game, ResultsDocument, RunRecord, SetSummary,
};
use ctf_arena::topology::build_default_topology;
use ctf_arena::{Error, Result};

#[derive(Parser)]
#[command(name = "ctf-arena", version, about = "Adversarial RL capture-the-flag arena")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackArg {
    Off,
    On,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Attacker,
    Defender,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::Attacker => Role::Attacker,
            RoleArg::Defender => Role::Defender,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment matrix, or the part selected by the filters.
    Run {
        #[arg(long)]
        seed: u64,
        /// Flat key=value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        game: Option<u8>,
        /// 1-based set index; defaults to every configured set.
        #[arg(long)]
        set: Option<u32>,
        #[arg(long, value_enum, default_value = "both")]
        attack: AttackArg,
        #[arg(long)]
        runs: Option<usize>,
        /// Extra key=value overrides, applied after the config file.
        #[arg(long = "set-option", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory; one subdirectory per game and condition.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write action logs, loss logs and poison audits per run.
        #[arg(long)]
        traces: bool,
    },
    /// Summarise a results CSV per set.
    Aggregate {
        results: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        game: u8,
        /// Print the summaries as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Percent change of average winning turns from control to attack.
    Compare {
        control: PathBuf,
        attack: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        game: u8,
    },
    /// Welch two-sample t-test on comma-separated samples.
    Ttest {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Grouped-bar data of average winning turns for one role.
    PlotData {
        control: PathBuf,
        attack: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        game: u8,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay an action log on the default topology.
    Replay {
        log: PathBuf,
        #[arg(long, default_value_t = 5000)]
        turn_limit: u32,
    },
}

fn game_of(n: u8) -> Result<Game> {
    Game::try_from(n)
}

fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    read_records_csv(fs::File::open(path)?)
}

fn load_summaries(path: &Path, game: u8) -> Result<Vec<SetSummary>> {
    aggregate_sets(&load_records(path)?, game_of(game)?)
}

fn avg(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn print_summaries(summaries: &[SetSummary]) {
    println!("set  attacker  wins  avg_turn  defender  wins  avg_turn");
    for s in summaries {
        println!(
            "{:<4} {:<9} {:<5} {:<9} {:<9} {:<5} {}",
            s.set,
            s.attacker,
            s.attacker_wins,
            avg(s.attacker_avg_turn),
            s.defender,
            s.defender_wins,
            avg(s.defender_avg_turn)
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    seed: u64,
    config: Option<PathBuf>,
    game: Option<u8>,
    set: Option<u32>,
    attack: AttackArg,
    runs: Option<usize>,
    overrides: Vec<String>,
    out: Option<PathBuf>,
    traces: bool,
) -> Result<()> {
    let mut base = ExperimentConfig::default();
    if let Some(path) = config {
        base.apply_text(&fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?)?;
    }
    for o in &overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {o:?}")))?;
        base.apply(k, v)?;
    }
    base.base_seed = seed;
    if let Some(r) = runs {
        base.runs_per_set = r;
    }
    base.validate()?;
    let games = match game {
        Some(g) => vec![game_of(g)?],
        None => vec![Game::One, Game::Two],
    };
    let sets: Vec<u32> = match set {
        Some(s) => {
            base.turn_limit(s)?;
            vec![s]
        }
        None => (1..=base.turn_limits.len() as u32).collect(),
    };
    let conditions: &[bool] = match attack {
        AttackArg::Off => &[false],
        AttackArg::On => &[true],
        AttackArg::Both => &[false, true],
    };

    let mut failed = 0;
    for &g in &games {
        for &attack_enabled in conditions {
            let mut cfg = base.clone();
            cfg.game = g;
            cfg.attack_enabled = attack_enabled;
            let label = format!(
                "game{}-{}",
                g.number(),
                if attack_enabled { "attack" } else { "control" }
            );
            let mut records = Vec::new();
            let mut failures = Vec::new();
            for &s in &sets {
                let outcome = run_set(&cfg, s, traces && out.is_some())?;
                if let (Some(dir), true) = (&out, traces) {
                    write_traces(&dir.join(&label), s, &outcome.records, &outcome.traces)?;
                }
                records.extend(outcome.records);
                failures.extend(outcome.failures);
            }
            for f in &failures {
                eprintln!("{label} set {} run {} failed: {}", f.set, f.run, f.message);
            }
            failed += failures.len();
            let summaries = aggregate_sets(&records, g)?;
            println!("== {label}");
            print_summaries(&summaries);
            if let Some(dir) = &out {
                let doc = ResultsDocument::new(cfg.clone(), summaries, failures);
                write_results(&dir.join(&label), &records, &doc)?;
            }
        }
    }
    if failed > 0 {
        return Err(Error::Training(format!("{failed} run(s) failed")));
    }
    Ok(())
}

fn write_traces(
    dir: &Path,
    set: u32,
    records: &[RunRecord],
    traces: &[ctf_arena::harness::GameTrace],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (r, t) in records.iter().zip(traces) {
        let stem = format!("set{}-run{}", set, r.run);
        t.log
            .write_csv(fs::File::create(dir.join(format!("actions-{stem}.csv")))?)?;
        t.write_losses_csv(fs::File::create(dir.join(format!("losses-{stem}.csv")))?)?;
        if let Some(audit) = &t.audit {
            let mut w = io::BufWriter::new(fs::File::create(dir.join(format!("audit-{stem}.csv")))?);
            ctf_arena::poison::write_audit_rows(audit, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_compare(control: &Path, attack: &Path, game: u8) -> Result<()> {
    let c = load_summaries(control, game)?;
    let a = load_summaries(attack, game)?;
    println!("set  role      control  attack  change");
    for (cs, as_) in c.iter().zip(&a) {
        for role in [Role::Attacker, Role::Defender] {
            let (before, after) = (cs.avg_turn(role), as_.avg_turn(role));
            let change = match (before, after) {
                (Some(b), Some(x)) => percent_change(b as f64, x as f64)
                    .map(|p| format!("{:+.2}%", round2(p)))
                    .unwrap_or_else(|_| "-".into()),
                _ => "-".into(),
            };
            println!("{:<4} {:<9} {:<8} {:<7} {}", cs.set, role, avg(before), avg(after), change);
        }
    }
    Ok(())
}

fn parse_sample(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| Error::Config(format!("bad number {x:?}"))))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            seed,
            config,
            game,
            set,
            attack,
            runs,
            overrides,
            out,
            traces,
        } => cmd_run(seed, config, game, set, attack, runs, overrides, out, traces),
        Command::Aggregate {
            results,
            game,
            json,
        } => {
            let summaries = load_summaries(&results, game)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summaries)?);
            } else {
                print_summaries(&summaries);
            }
            Ok(())
        }
        Command::Compare {
            control,
            attack,
            game,
        } => cmd_compare(&control, &attack, game),
        Command::Ttest { a, b } => {
            let r = welch_t_test(&parse_sample(&a)?, &parse_sample(&b)?)?;
            println!("t={} df={} p={}", r.t, r.df, r.p_two_tailed);
            Ok(())
        }
        Command::PlotData {
            control,
            attack,
            game,
            role,
            out,
        } => {
            let c = load_summaries(&control, game)?;
            let a = load_summaries(&attack, game)?;
            match out {
                Some(path) => emit_plot_data(&c, &a, role.into(), fs::File::create(path)?),
                None => emit_plot_data(&c, &a, role.into(), io::stdout().lock()),
            }
        }
        Command::Replay { log, turn_limit } => {
            let log = ActionLog::read_csv(BufReader::new(fs::File::open(log)?))?;
            let env = CtfEnv::new(build_default_topology(), Default::default(), turn_limit)?;
            let g = replay(&env, &log)?;
            let winner = g.winner.map(|w| w.to_string()).unwrap_or_else(|| "none".into());
            let compromised: Vec<String> = g.compromised_hosts().map(|h| h.to_string()).collect();
            println!("turn={} winner={} compromised={}", g.turn, winner, compromised.join(";"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
