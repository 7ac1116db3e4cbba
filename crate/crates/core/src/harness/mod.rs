//! Experiment harness: game runs, set matrices, aggregation and reporting.

mod config;
pub mod report;
pub mod results;
pub mod runner;
pub mod scripted;

pub use config::{ExperimentConfig, Game};
pub use report::{
    aggregate, aggregate_sets, emit_plot_data, floor_mean, percent_change, round2, welch_t_test,
    RunRecord, SetSummary, WelchResult,
};
pub use results::{read_records_csv, read_results, write_records_csv, write_results, ResultsDocument};
pub use runner::{run_game, run_game_traced, run_matrix, run_set, GameTrace, LossRow, RunFailure, SetOutcome};

/// Seed of one run, derived from the base seed and the run coordinates
/// with a splitmix64 finaliser so neighbouring runs get unrelated streams.
pub fn run_seed(base: u64, game: Game, attack: bool, set: u32, run: u32) -> u64 {
    let mut x = base;
    for part in [u64::from(game.number()), u64::from(attack), u64::from(set), u64::from(run)] {
        x = splitmix64(x ^ splitmix64(part.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
