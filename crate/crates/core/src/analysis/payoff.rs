use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::treatment_key;
use crate::market::expected_payoff;
use crate::session::SessionRecord;

/// Location summary of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// 10th through 90th percentiles. All zero for an empty sample.
    pub deciles: [f64; 9],
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                mean: 0.0,
                median: 0.0,
                deciles: [0.0; 9],
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut deciles = [0.0; 9];
        for (i, d) in deciles.iter_mut().enumerate() {
            *d = quantile(&sorted, (i + 1) as f64 / 10.0);
        }
        Self {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(&sorted, 0.5),
            deciles,
        }
    }
}

/// Payoffs (in lire) of one group of agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSummary {
    pub treatment: String,
    pub model: String,
    pub variant: String,
    /// Per agent, from its executed trades once the value is revealed.
    pub realized: Stats,
    /// Per agent, expected value minus price at its executed trades.
    pub expected: Stats,
    /// Per valid decision: the pair's action on the realized signal,
    /// valued at that round's beliefs and price.
    pub decision_expected: Stats,
}

/// Payoff statistics grouped by treatment, model and prompt variant.
pub fn payoff_stats(records: &[SessionRecord]) -> Vec<PayoffSummary> {
    type Key = (String, String, String);
    let mut realized: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut expected: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut decision: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for record in records {
        let treatment = treatment_key(&record.treatment);
        let key_of = |agent: usize| -> Key {
            let info = record.agents.get(agent);
            (
                treatment.clone(),
                info.map_or_else(|| "unknown".to_string(), |i| i.model_key.clone()),
                info.and_then(|i| i.guidance)
                    .map_or_else(|| "rule".to_string(), |g| g.name().to_string()),
            )
        };
        for p in &record.payoffs {
            realized.entry(key_of(p.agent)).or_default().push(p.realized_lire);
            expected.entry(key_of(p.agent)).or_default().push(p.expected_lire);
        }
        for round in &record.rounds {
            for (agent, pair) in round.decisions.iter().enumerate().filter(|(_, p)| p.valid) {
                let action = pair.action_for(round.realized_signal);
                decision.entry(key_of(agent)).or_default().push(expected_payoff(
                    action,
                    round.price,
                    &round.beliefs,
                    round.realized_signal,
                ));
            }
        }
    }
    realized
        .into_iter()
        .map(|(key, r)| {
            let e = expected.remove(&key).unwrap_or_default();
            let d = decision.remove(&key).unwrap_or_default();
            PayoffSummary {
                realized: Stats::of(&r),
                expected: Stats::of(&e),
                decision_expected: Stats::of(&d),
                treatment: key.0,
                model: key.1,
                variant: key.2,
            }
        })
        .collect()
}

/// Plot-ready prices of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub session: u32,
    pub treatment: String,
    /// `(round, displayed pre-trade price)`.
    pub points: Vec<(u32, f64)>,
    /// Displayed price after the last trade.
    pub final_price: f64,
}

pub fn price_series(records: &[SessionRecord]) -> Vec<PriceSeries> {
    records
        .iter()
        .map(|r| {
            let prices = r.displayed_prices();
            PriceSeries {
                session: r.session_index,
                treatment: treatment_key(&r.treatment),
                points: r.rounds.iter().map(|x| (x.round, x.displayed_price)).collect(),
                final_price: prices.last().copied().unwrap_or(r.treatment.initial_price),
            }
        })
        .collect()
}
