//! Benchmark fixtures shared by the bench targets.

use herdsim::session::AgentSpec;
use herdsim::{Action, AgentKind, ExperimentConfig, TreatmentSpec};

/// Every history of exactly `len` trades, in lexicographic order.
pub fn all_histories(len: usize) -> Vec<Vec<Action>> {
    (0..len).fold(vec![Vec::new()], |acc, _| {
        acc.into_iter()
            .flat_map(|h| {
                Action::ALL.into_iter().map(move |a| {
                    let mut next = h.clone();
                    next.push(a);
                    next
                })
            })
            .collect()
    })
}

/// Canonical protocol with one homogeneous rule-agent group.
pub fn rule_config(treatment: TreatmentSpec, kind: AgentKind, sessions: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::canonical(treatment, vec![AgentSpec::new(kind, 8)]);
    cfg.sessions = sessions;
    cfg.environment_seed = 1;
    cfg.agent_seed = 1;
    cfg
}
