use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::market::{AssetValue, Signal};

/// Nature's moves for one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub value: AssetValue,
    /// Realized signal per round.
    pub signals: Vec<Signal>,
    /// Agent selected to trade in each round.
    pub selection: Vec<usize>,
}

/// The environment stream for a session: seeded by the experiment's
/// environment seed, one ChaCha stream per session index.
pub fn environment_rng(environment_seed: u64, session: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(environment_seed);
    rng.set_stream(u64::from(session));
    rng
}

/// Draws value, signals and selection order, in that order, from the
/// session's environment stream.
///
/// An information event always occurs, so the value is 0 or 100. With more
/// rounds than agents the selection walks through fresh permutations, so no
/// agent trades twice before every agent has traded once more.
pub fn draw_environment_with(
    environment_seed: u64,
    session: u32,
    signal_accuracy: f64,
    rounds: u32,
    agents: u32,
) -> Environment {
    let mut rng = environment_rng(environment_seed, session);
    let value = if rng.gen_bool(0.5) {
        AssetValue::High
    } else {
        AssetValue::Low
    };
    let signals = (0..rounds)
        .map(|_| {
            let matches_value = rng.gen_bool(signal_accuracy);
            if matches_value == (value == AssetValue::High) {
                Signal::Good
            } else {
                Signal::Bad
            }
        })
        .collect();
    let mut selection = Vec::with_capacity(rounds as usize);
    while selection.len() < rounds as usize {
        let mut cycle: Vec<usize> = (0..agents as usize).collect();
        cycle.shuffle(&mut rng);
        selection.extend(cycle);
    }
    selection.truncate(rounds as usize);
    Environment {
        value,
        signals,
        selection,
    }
}

pub fn draw_environment(cfg: &ExperimentConfig, session: u32) -> Environment {
    draw_environment_with(
        cfg.environment_seed,
        session,
        cfg.treatment.signal_accuracy,
        cfg.rounds,
        cfg.agents_per_session,
    )
}

/// Agent-side stream for agent `agent` in `session`; `purpose` separates
/// independent uses (0 = decisions, 1 = persona sampling).
pub fn agent_rng(agent_seed: u64, session: u32, agent: usize, purpose: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
    rng.set_stream((u64::from(purpose) << 56) | (u64::from(session) << 24) | agent as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_is_a_permutation() {
        for session in 0..20 {
            let env = draw_environment_with(3, session, 0.7, 8, 8);
            let mut sorted = env.selection.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..8).collect::<Vec<_>>());
            assert_eq!(env.signals.len(), 8);
        }
    }

    #[test]
    fn length_variant_cycles() {
        let env = draw_environment_with(3, 0, 0.7, 20, 8);
        assert_eq!(env.selection.len(), 20);
        for chunk in env.selection.chunks(8) {
            let mut c = chunk.to_vec();
            c.sort_unstable();
            c.dedup();
            assert_eq!(c.len(), chunk.len());
        }
    }

    #[test]
    fn sessions_differ_and_repeat() {
        let a = draw_environment_with(9, 0, 0.7, 8, 8);
        let b = draw_environment_with(9, 1, 0.7, 8, 8);
        assert_ne!(a, b);
        assert_eq!(a, draw_environment_with(9, 0, 0.7, 8, 8));
    }
}
